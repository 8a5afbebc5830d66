"""PCA compression of cached activations.

A model is fit once on a warmup window of layer outputs and then frozen.
Cached ``n x d`` activations are stored as ``n x c`` projections and expanded
back on a hit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from llmcache.errors import ShapeError


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def __post_init__(self) -> None:
        for name in ("mean", "components", "explained_variance"):
            a = np.array(getattr(self, name), dtype=np.float64, copy=True)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        c, d = self.components.shape
        if self.mean.shape != (d,) or self.explained_variance.shape != (c,):
            raise ShapeError("inconsistent PCA model shapes")

    @property
    def n_components(self) -> int:
        return int(self.components.shape[0])

    @property
    def dim(self) -> int:
        return int(self.components.shape[1])

    @property
    def nbytes(self) -> int:
        return int(self.mean.nbytes + self.components.nbytes + self.explained_variance.nbytes)

    def project(self, h: np.ndarray) -> np.ndarray:
        return pca_project(self, h)

    def reconstruct(self, z: np.ndarray) -> np.ndarray:
        return pca_reconstruct(self, z)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so its first non-negligible coordinate is positive."""
    out = vectors.copy()
    for row in out:
        nz = np.flatnonzero(np.abs(row) > 1e-12 * max(np.abs(row).max(), 1e-300))
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return out


def pca_fit(samples: np.ndarray, c: int) -> PcaModel:
    """Fit the top-``c`` principal axes of ``samples`` (``m x d``, one sample per row)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"samples must be m x d, got shape {x.shape}")
    m, d = x.shape
    if m < 2:
        raise ShapeError(f"need at least 2 samples, got {m}")
    if not 1 <= c <= min(m, d):
        raise ShapeError(f"component count {c} outside [1, {min(m, d)}]")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (m - 1)
    cov = 0.5 * (cov + cov.T)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1][:c]
    components = _fix_signs(evecs[:, order].T)
    return PcaModel(mean, components, evals[order])


def pca_project(model: PcaModel, h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != model.dim:
        raise ShapeError(f"expected n x {model.dim}, got {h.shape}")
    return (h - model.mean) @ model.components.T


def pca_reconstruct(model: PcaModel, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != model.n_components:
        raise ShapeError(f"expected n x {model.n_components}, got {z.shape}")
    return z @ model.components + model.mean
