"""Dense eigendecomposition and exact spectral filtering.

This is the ground-truth path: materialize the Laplacian, take its full
symmetric eigendecomposition, and apply spectral transfer functions
eigenvalue-wise. Intended for small graphs only; everything here is the
oracle that the sparse linear-time paths are checked against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .graphs import LaplacianOperator

DEFAULT_ORACLE_CAP = 2000


@dataclass(frozen=True)
class DenseSpectrum:
    """Full eigenpairs of a Laplacian.

    eigenvalues are sorted ascending and clipped so that tiny negative
    round-off (within -1e-9) reads as exactly 0; eigenvectors has the
    orthonormal eigenvectors as columns.
    """

    eigenvalues: np.ndarray   # (n,) float64, nondecreasing
    eigenvectors: np.ndarray  # (n, n) float64, columns orthonormal

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


def eigendecompose(L: LaplacianOperator, cap: int = DEFAULT_ORACLE_CAP) -> DenseSpectrum:
    """Dense symmetric eigendecomposition of L.

    Raises
    ------
    ValueError
        If L.n exceeds cap; this is the oracle path only and refuses
        problem sizes where a dense solve stops being a sane reference.
    """
    if L.n > cap:
        raise ValueError(
            f"eigendecompose is the oracle path only: n={L.n} exceeds cap {cap}"
        )
    lam, phi = scipy.linalg.eigh(L.dense())
    lam = lam.copy()
    lam[(lam < 0) & (lam >= -1e-9)] = 0.0
    return DenseSpectrum(eigenvalues=lam, eigenvectors=phi)


def graph_fourier(spec: DenseSpectrum, f: np.ndarray) -> np.ndarray:
    """Coefficients of f in the eigenvector basis (transpose multiply)."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] != spec.n:
        raise ValueError(f"signal length {f.shape[0]} != n {spec.n}")
    return spec.eigenvectors.T @ f


def apply_spectral_function(spec: DenseSpectrum, g, f: np.ndarray) -> np.ndarray:
    """Apply the scalar transfer function g through the eigenbasis.

    g may be a callable evaluated on the eigenvalue vector or a precomputed
    length-n array of multipliers. f may be one signal (n,) or a stack (n, b).
    """
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] != spec.n:
        raise ValueError(f"signal length {f.shape[0]} != n {spec.n}")
    mult = np.asarray(g(spec.eigenvalues) if callable(g) else g)
    if mult.shape != (spec.n,):
        raise ValueError("spectral multiplier must have one entry per eigenvalue")
    fhat = spec.eigenvectors.T @ f
    scaled = mult * fhat if f.ndim == 1 else mult[:, None] * fhat
    return spec.eigenvectors @ scaled
