"""Command-line interface.

Subcommands cover the full pipeline: generate a synthetic body and
wardrobe, dress figures, register garment templates to labeled scans, fit
per-class shape spaces, segment body meshes, retarget garments between
figures, render label images and evaluate predictions.

Exit codes: 0 success, 1 domain error (bad data, failed precondition),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

log = logging.getLogger("wardrobe")


def _load_toml(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _read_labels(path) -> np.ndarray:
    with open(path) as fh:
        return np.array([int(line.strip()) for line in fh if line.strip()],
                        dtype=np.int64)


def _write_labels(path, labels) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(str(int(x)) for x in labels) + "\n")


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def _parse_size(text) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        w, h = int(w), int(h)
    except ValueError as exc:
        raise ValueError(f"bad --size '{text}', expected WIDTHxHEIGHT") from exc
    if w < 1 or h < 1:
        raise ValueError("--size must be positive")
    return w, h


def _load_body_fit(path):
    """Body fit file: either a dressed-figure JSON or a flat params JSON.

    Returns (model, BodyParams, skin_displacements).
    """
    from .body import BodyModel, BodyParams
    with open(path) as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    if "model" not in doc:
        raise ValueError(f"{path}: missing field 'model'")
    model = BodyModel.from_json(os.path.join(base, doc["model"]))
    skin = doc.get("skin_displacements")
    if skin is not None:
        skin = np.asarray(skin, dtype=np.float64)
    if "frames" in doc:
        theta = np.asarray(doc["frames"], dtype=np.float64)[0]
    elif "theta" in doc:
        theta = np.asarray(doc["theta"], dtype=np.float64)
    else:
        raise ValueError(f"{path}: missing field 'theta' (or 'frames')")
    params = BodyParams(doc["beta"], theta, doc.get("trans", [0.0, 0.0, 0.0]))
    return model, params, skin


# ----------------------------------------------------------------------
# subcommands


def cmd_gen_body(args) -> int:
    from .body import make_synthetic_body
    model = make_synthetic_body(seed=args.seed, n_betas=args.n_betas,
                                n_joints=args.joints)
    model.to_json(args.out)
    log.info("wrote body model with %d vertices to %s",
             model.n_vertices, args.out)
    return 0


def cmd_gen_wardrobe(args) -> int:
    from .synthesis import generate_wardrobe
    manifest = generate_wardrobe(
        args.out, seed=args.seed, n_figures=args.figures,
        n_betas=args.n_betas, n_joints=args.joints,
        frames_per_figure=args.frames)
    log.info("wardrobe with %d figures and %d garment classes in %s",
             len(manifest["figures"]), len(manifest["garments"]), args.out)
    return 0


def cmd_dress(args) -> int:
    from .garment import DressedFigure, dress
    from .mesh import save_obj
    from .synthesis import scan_from_figure
    figure = DressedFigure.from_json(args.figure)
    os.makedirs(args.out_dir, exist_ok=True)
    layers = dress(figure.model, figure, args.frame)
    for layer in layers:
        name = "skin" if layer.label == 0 else f"{layer.name}_{layer.label}"
        save_obj(layer.mesh, os.path.join(args.out_dir, f"{name}.obj"))
    scan, labels = scan_from_figure(figure, args.frame)
    save_obj(scan, os.path.join(args.out_dir, "scan.obj"))
    _write_labels(os.path.join(args.out_dir, "scan_labels.txt"), labels)
    log.info("dressed %d layers into %s", len(layers), args.out_dir)
    return 0


def cmd_register(args) -> int:
    from .garment import Garment
    from .mesh import load_obj, save_obj
    from .registration import RegistrationConfig, register_garment
    template = Garment.from_json(args.template)
    model, fit, skin = _load_body_fit(args.body_fit)
    target = load_obj(args.target)
    labels = _read_labels(args.labels)
    if len(labels) != target.n_vertices:
        raise ValueError(f"{args.labels}: {len(labels)} labels for "
                         f"{target.n_vertices} scan vertices")
    config = RegistrationConfig()
    if args.config:
        config = RegistrationConfig.from_mapping(_load_toml(args.config))
    result = register_garment(template, model, fit, target, labels,
                              args.label, config, skin_displacements=skin)
    save_obj(template.mesh.with_vertices(result.vertices), args.out)
    if args.out_displacements:
        _write_json(args.out_displacements,
                    {"class": template.name,
                     "displacements": result.displacements.tolist()})
    if args.report:
        _write_json(args.report, result.diagnostics)
    log.info("registered '%s': converged=%s energy=%.3e",
             template.name, result.diagnostics["converged"],
             result.diagnostics["energy"])
    return 0


def cmd_fit_pca(args) -> int:
    from .garment import DressedFigure, unposed_garment_shape
    from .shapespace import fit_pca
    samples = []
    for fig_path in args.figures:
        figure = DressedFigure.from_json(fig_path)
        for garment, disp in figure.garments:
            if garment.name == args.garment_class:
                zero = np.zeros((figure.model.n_joints, 3))
                samples.append(unposed_garment_shape(
                    figure.model, figure.beta, zero, disp, garment))
    if len(samples) < 2:
        raise ValueError(f"found {len(samples)} instances of class "
                         f"'{args.garment_class}' in the figures; need >= 2")
    space = fit_pca(samples, n_components=args.components,
                    name=args.garment_class)
    space.to_json(args.out)
    log.info("shape space '%s': %d samples, %d components",
             args.garment_class, len(samples), space.n_components)
    return 0


def cmd_segment(args) -> int:
    from .mesh import load_obj
    from .segmentation import MrfProblem, build_prior, solve_mrf
    body = load_obj(args.body)
    unary = np.loadtxt(args.unaries, ndmin=2)
    if unary.shape[0] != body.n_vertices:
        raise ValueError(f"{args.unaries}: {unary.shape[0]} rows for "
                         f"{body.n_vertices} body vertices")
    with open(args.regions) as fh:
        regions_doc = json.load(fh)
    if "regions" not in regions_doc:
        raise ValueError(f"{args.regions}: missing field 'regions'")
    priors = {}
    for label_str, ids in regions_doc["regions"].items():
        priors[int(label_str)] = build_prior(body, np.asarray(ids),
                                             kappa=args.kappa)
    problem = MrfProblem(body, unary, priors,
                         lambda_prior=args.lambda_prior,
                         lambda_pair=args.lambda_pair)
    labels, energy = solve_mrf(problem)
    _write_labels(args.out, labels)
    if args.report:
        counts = {str(l): int(c) for l, c in
                  zip(*np.unique(labels, return_counts=True))}
        _write_json(args.report, {"energy": energy, "label_counts": counts})
    log.info("segmented %d vertices, energy %.4f", body.n_vertices, energy)
    return 0


def cmd_retarget(args) -> int:
    from .garment import DressedFigure
    from .retarget import retarget_pipeline
    source = DressedFigure.from_json(args.source)
    target = DressedFigure.from_json(args.target, model=source.model
                                     if args.shared_model else None)
    result, diagnostics = retarget_pipeline(source, target, args.strategy)
    result.model_path = target.model_path
    result.garment_paths = source.garment_paths
    result.to_json(args.out)
    if args.report:
        _write_json(args.report, diagnostics)
    log.info("retargeted %d garments (%s)", len(result.garments),
             args.strategy)
    return 0


def cmd_render(args) -> int:
    from .evaluation import Camera, rasterize_labels
    from .garment import DressedFigure
    figure = DressedFigure.from_json(args.figure)
    width, height = _parse_size(args.size)
    with open(args.camera) as fh:
        camera = Camera.from_dict(json.load(fh), width, height)
    image = rasterize_labels(figure, args.frame, camera, width, height)
    image.save_png(args.out)
    log.info("rendered %dx%d label image to %s", width, height, args.out)
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation import (intermediate_losses, layers_by_label,
                             loss_3d_posed, loss_3d_tpose, symmetric_error)
    from .garment import DressedFigure, dress
    pred = DressedFigure.from_json(args.pred)
    gt = DressedFigure.from_json(args.gt, model=pred.model
                                 if args.shared_model else None)
    frames = min(pred.n_frames, gt.n_frames)
    pred_instances, gt_instances = [], []
    for f in range(frames):
        pred_instances.append(layers_by_label(dress(pred.model, pred, f)))
        gt_instances.append(layers_by_label(dress(gt.model, gt, f)))
    common = sorted(set(pred_instances[0]) & set(gt_instances[0]) - {0})
    per_garment = {}
    for label in common:
        name = pred.garments[label - 1][0].name
        per_garment[name] = symmetric_error(pred_instances, gt_instances,
                                            label)
    metrics = {
        "per_garment_error": per_garment,
        "overall_error": (float(np.mean(list(per_garment.values())))
                          if per_garment else None),
        "intermediate": intermediate_losses(
            {"theta": pred.frames[:frames], "beta": pred.beta},
            {"theta": gt.frames[:frames], "beta": gt.beta}),
    }
    if len(pred.garments) == len(gt.garments) and all(
            a[0].n_vertices == b[0].n_vertices
            for a, b in zip(pred.garments, gt.garments)):
        metrics["loss_3d_tpose"] = loss_3d_tpose(pred, gt)
        metrics["loss_3d_posed"] = loss_3d_posed(pred, gt, range(frames))
    _write_json(args.out, metrics)
    log.info("metrics written to %s", args.out)
    return 0


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wardrobe",
        description="layered garment meshes on a parametric body")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for every stochastic step")
    parser.add_argument("--threads", type=int, default=1,
                        help="accepted for interface compatibility; "
                             "execution is single-threaded and deterministic")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-body", help="generate a synthetic body model")
    p.add_argument("--n-betas", type=int, default=8)
    p.add_argument("--joints", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_body)

    p = sub.add_parser("gen-wardrobe",
                       help="generate a full synthetic wardrobe fixture tree")
    p.add_argument("--out", required=True)
    p.add_argument("--figures", type=int, default=4)
    p.add_argument("--frames", type=int, default=2)
    p.add_argument("--n-betas", type=int, default=8)
    p.add_argument("--joints", type=int, default=16)
    p.set_defaults(func=cmd_gen_wardrobe)

    p = sub.add_parser("dress", help="pose a figure and write its layers")
    p.add_argument("--figure", required=True)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_dress)

    p = sub.add_parser("register",
                       help="fit a garment template to a labeled scan")
    p.add_argument("--template", required=True)
    p.add_argument("--body-fit", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--label", type=int, default=1,
                   help="integer label of the garment on the scan")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--out-displacements", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("fit-pca", help="fit a garment shape space")
    p.add_argument("--figures", nargs="+", required=True)
    p.add_argument("--garment-class", required=True)
    p.add_argument("--components", type=int, default=35)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_pca)

    p = sub.add_parser("segment", help="label body vertices with an MRF")
    p.add_argument("--body", required=True)
    p.add_argument("--unaries", required=True)
    p.add_argument("--regions", required=True)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--lambda-prior", type=float, default=1.0)
    p.add_argument("--lambda-pair", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("retarget", help="move garments between figures")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--strategy", choices=["naive", "body-aware"],
                   default="body-aware")
    p.add_argument("--shared-model", action="store_true",
                   help="assume both figures reference the same body model")
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_retarget)

    p = sub.add_parser("render", help="rasterize semantic labels")
    p.add_argument("--figure", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--size", default="512x512")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("evaluate", help="compare two dressed figures")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--shared-model", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
