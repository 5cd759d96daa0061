"""Per-garment-class PCA over unposed registrations.

A garment is represented as coefficients in an orthonormal vertex basis
plus a small high-frequency residual. Residual rows are capped (1 cm by
default) so the basis, not the residual, explains the overall shape.
"""

from __future__ import annotations

import json
import warnings
from typing import NamedTuple

import numpy as np

DEFAULT_COMPONENTS = 35
RESIDUAL_CAP = 0.01  # meters per residual row


class PcaShapeSpace:
    """Mean, orthonormal basis and singular values for one garment class."""

    def __init__(self, name, mean, basis, singular_values,
                 residual_cap=RESIDUAL_CAP):
        self.name = str(name)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.basis = np.asarray(basis, dtype=np.float64)
        self.singular_values = np.asarray(singular_values, dtype=np.float64)
        self.residual_cap = float(residual_cap)
        if self.mean.ndim != 2 or self.mean.shape[1] != 3:
            raise ValueError("mean must be (m_g, 3)")
        if self.basis.shape != (3 * len(self.mean), self.n_components):
            raise ValueError("basis must be (3*m_g, n_components)")
        gram = self.basis.T @ self.basis
        if np.abs(gram - np.eye(self.n_components)).max() > 1e-8:
            raise ValueError("basis columns must be orthonormal")
        if np.any(np.diff(self.singular_values) > 1e-12):
            raise ValueError("singular values must be non-increasing")

    @property
    def n_vertices(self) -> int:
        return len(self.mean)

    @property
    def n_components(self) -> int:
        return len(self.singular_values)

    # ------------------------------------------------------------------

    def to_json(self, path) -> None:
        doc = {
            "class": self.name,
            "mean": self.mean.tolist(),
            "basis": self.basis.T.tolist(),   # column-major: list of columns
            "singular_values": self.singular_values.tolist(),
            "n_c": self.n_components,
            "residual_cap": self.residual_cap,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def from_json(cls, path) -> "PcaShapeSpace":
        with open(path) as fh:
            doc = json.load(fh)
        basis = np.asarray(doc["basis"]).T
        return cls(doc["class"], doc["mean"], basis, doc["singular_values"],
                   doc.get("residual_cap", RESIDUAL_CAP))


class EncodeResult(NamedTuple):
    coefficients: np.ndarray   # (n_c,)
    residual: np.ndarray       # (m_g, 3), rows capped
    clipped_rows: int


def fit_pca(unposed_garments, n_components=DEFAULT_COMPONENTS, name="garment",
            residual_cap=RESIDUAL_CAP) -> PcaShapeSpace:
    """Mean-centered SVD over flattened unposed garment vertices.

    Asks for at most samples-1 components (clamped with a warning). The
    sign convention makes the largest-magnitude entry of every column
    positive, so refitting the same data reproduces the same basis.
    """
    samples = [np.asarray(g, dtype=np.float64) for g in unposed_garments]
    if len(samples) < 2:
        raise ValueError("need at least 2 samples to fit a shape space")
    shape = samples[0].shape
    if shape[1] != 3:
        raise ValueError("samples must be (m_g, 3)")
    for s in samples[1:]:
        if s.shape != shape:
            raise ValueError("all samples must share one topology")
    X = np.stack([s.ravel() for s in samples])     # (N, 3*m_g)
    limit = len(samples) - 1
    if n_components > limit:
        warnings.warn(f"n_components clamped from {n_components} to {limit} "
                      f"(samples - 1)", RuntimeWarning)
        n_components = limit
    if n_components < 1:
        raise ValueError("need at least one component")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, svals, vt = np.linalg.svd(Xc, full_matrices=False)
    basis = vt[:n_components].T
    svals = svals[:n_components]
    # deterministic sign: largest-magnitude entry of each column positive
    peak = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[peak, np.arange(n_components)])
    signs[signs == 0] = 1.0
    basis = basis * signs
    return PcaShapeSpace(name, mean.reshape(-1, 3), basis, svals,
                         residual_cap=residual_cap)


def encode(space: PcaShapeSpace, garment_vertices) -> EncodeResult:
    """Project onto the basis and cap the leftover per-vertex residual.

    The residual is whatever the basis cannot express; rows longer than the
    cap are scaled down and counted in ``clipped_rows``.
    """
    verts = np.asarray(garment_vertices, dtype=np.float64)
    if verts.shape != space.mean.shape:
        raise ValueError(f"garment topology mismatch: expected "
                         f"{space.mean.shape}, got {verts.shape}")
    centered = (verts - space.mean).ravel()
    z = space.basis.T @ centered
    residual = (centered - space.basis @ z).reshape(-1, 3)
    norms = np.linalg.norm(residual, axis=1)
    over = norms > space.residual_cap
    if over.any():
        residual = residual.copy()
        residual[over] *= (space.residual_cap / norms[over])[:, None]
    return EncodeResult(z, residual, int(over.sum()))


def decode(space: PcaShapeSpace, coefficients, residual=None) -> np.ndarray:
    """Mean + basis*z, plus the high-frequency residual when given."""
    z = np.asarray(coefficients, dtype=np.float64)
    if z.shape != (space.n_components,):
        raise ValueError(f"expected {space.n_components} coefficients")
    out = space.mean + (space.basis @ z).reshape(-1, 3)
    if residual is not None:
        residual = np.asarray(residual, dtype=np.float64)
        if residual.shape != space.mean.shape:
            raise ValueError("residual shape mismatch")
        out = out + residual
    return out
