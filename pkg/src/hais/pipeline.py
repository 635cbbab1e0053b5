"""Patch extraction, PCA whitening and synthetic ground-truth data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractViolation, DegenerateDataError, InputError

# eigenvalues below this fraction of the largest count as zero variance
_RANK_TOL = 1e-12


@dataclass(frozen=True)
class PatchConfig:
    patch_edge: int = 16
    n_patches: int = 10_000
    apply_log: bool = True

    def __post_init__(self):
        if self.patch_edge < 1:
            raise ContractViolation("patch_edge must be at least 1")
        if self.n_patches < 0:
            raise ContractViolation("n_patches must be nonnegative")


@dataclass(frozen=True)
class WhitenTransform:
    """Mean removal, projection onto the top principal directions, rescaling.

    ``basis`` has one orthonormal principal direction per row (shape
    ``(M, D)``) and ``scales`` multiplies each projected coordinate.
    """

    mean: np.ndarray
    basis: np.ndarray
    scales: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.basis.shape[1]

    @property
    def out_dim(self) -> int:
        return self.basis.shape[0]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "basis": self.basis.tolist(),
            "scales": self.scales.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> WhitenTransform:
        try:
            mean = np.asarray(doc["mean"], dtype=float)
            basis = np.asarray(doc["basis"], dtype=float)
            scales = np.asarray(doc["scales"], dtype=float)
        except KeyError as err:
            raise InputError(f"transform document lacks field {err.args[0]!r}") from None
        if basis.ndim != 2 or mean.shape != (basis.shape[1],) or scales.shape != (basis.shape[0],):
            raise InputError(
                f"transform shapes disagree: mean {mean.shape}, basis {basis.shape}, scales {scales.shape}"
            )
        return cls(mean, basis, scales)


def extract_patches(
    images: Sequence[np.ndarray],
    cfg: PatchConfig,
    rng: np.random.Generator,
    names: Sequence[str] | None = None,
) -> np.ndarray:
    """Cut ``cfg.n_patches`` square patches at uniformly random places.

    The image for each patch is chosen uniformly, then the top-left corner
    uniformly among valid placements.  Rows are flattened row-major.
    """
    images = [np.asarray(im, dtype=float) for im in images]
    names = list(names) if names is not None else [f"image {i}" for i in range(len(images))]
    e = cfg.patch_edge
    if not images:
        raise InputError("no images given")
    for name, im in zip(names, images):
        if im.ndim != 2:
            raise InputError(f"{name}: expected a grayscale image, got shape {im.shape}")
        if im.shape[0] < e or im.shape[1] < e:
            raise InputError(f"{name}: {im.shape[0]}x{im.shape[1]} is smaller than patch edge {e}")
    out = np.empty((cfg.n_patches, e * e))
    for k in range(cfg.n_patches):
        i = int(rng.integers(len(images)))
        im = images[i]
        r = int(rng.integers(im.shape[0] - e + 1))
        c = int(rng.integers(im.shape[1] - e + 1))
        patch = im[r : r + e, c : c + e]
        if cfg.apply_log:
            bad = np.argwhere(patch <= 0)
            if bad.size:
                br, bc = bad[0]
                raise InputError(
                    f"{names[i]}: nonpositive pixel {patch[br, bc]:g} at row {r + br}, column {c + bc}; "
                    "cannot take its log"
                )
            patch = np.log(patch)
        out[k] = patch.ravel()
    return out


def fit_whiten(data, m_components: int) -> WhitenTransform:
    """PCA whitening fit so the fit data has unit population variance per component.

    Components come out in decreasing variance order, each basis row signed
    so its largest-magnitude entry is positive.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ContractViolation("data must be a matrix")
    n, d = data.shape
    if not 1 <= m_components <= d:
        raise ContractViolation(f"m_components must be in [1, {d}], got {m_components}")
    if n < m_components:
        raise ContractViolation(f"need at least {m_components} rows, got {n}")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:m_components]
    evals = evals[order]
    basis = evecs[:, order].T
    top = max(float(evals[0]), 0.0)
    if top <= 0 or evals[-1] <= _RANK_TOL * top:
        raise DegenerateDataError(
            f"data has zero variance within the top {m_components} components; cannot whiten"
        )
    pivot = np.argmax(np.abs(basis), axis=1)
    basis *= np.sign(basis[np.arange(m_components), pivot])[:, None]
    # rescale with the realized variance of the projection
    proj = centered @ basis.T
    scales = 1.0 / np.sqrt(np.mean(proj * proj, axis=0))
    return WhitenTransform(mean, basis, scales)


def _check_cols(t: WhitenTransform, rows, want: int, what: str) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.shape[-1] != want:
        raise ContractViolation(f"{what} has {rows.shape[-1]} columns, transform expects {want}")
    return rows


def apply_whiten(t: WhitenTransform, rows) -> np.ndarray:
    rows = _check_cols(t, rows, t.in_dim, "input")
    return ((rows - t.mean) @ t.basis.T) * t.scales


def invert_whiten(t: WhitenTransform, rows) -> np.ndarray:
    rows = _check_cols(t, rows, t.out_dim, "whitened input")
    return (rows / t.scales) @ t.basis + t.mean


def synth_gaussian(dim: int, covariance, n: int, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean Gaussian rows with the requested covariance.

    ``covariance`` may be a scalar variance, a vector of per-axis variances,
    or a full matrix.
    """
    cov = np.asarray(covariance, dtype=float)
    if cov.ndim == 0:
        cov = cov * np.eye(dim)
    elif cov.ndim == 1:
        cov = np.diag(cov)
    if cov.shape != (dim, dim):
        raise ContractViolation(f"covariance shape {cov.shape} does not match dim {dim}")
    if not np.allclose(cov, cov.T):
        raise InputError("covariance is not symmetric")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise InputError("covariance is not positive definite") from None
    return rng.standard_normal((n, dim)) @ chol.T
