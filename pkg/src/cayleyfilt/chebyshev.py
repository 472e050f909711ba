"""Chebyshev polynomial spectral filters (the baseline family).

The filter is sum_j alpha_j T_j(Delta_rescaled) with T_j the Chebyshev
polynomials and Delta_rescaled = 2 Delta / lambda_max - I, whose spectrum
sits in [-1, 1]. Application is the plain three-term vector recurrence:
r sparse mat-vecs for an order-r filter, and support confined to the
r-hop neighborhood of the input's support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import LaplacianKind, LaplacianOperator, estimate_lambda_max, _dmul
from .cayley import OpCounter, _check_signal


@dataclass(frozen=True)
class ChebFilter:
    """Real coefficients alpha_0..alpha_r plus the spectral rescaling bound."""

    alpha: np.ndarray   # (r + 1,) float64
    lambda_max: float

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=np.float64))
        if a.ndim != 1 or a.size < 1:
            raise ValueError("alpha must hold at least the constant coefficient")
        if not np.all(np.isfinite(a)):
            raise ValueError("filter coefficients must be finite")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "lambda_max", float(self.lambda_max))
        if not (self.lambda_max > 0 and np.isfinite(self.lambda_max)):
            raise ValueError("lambda_max must be positive and finite")

    @property
    def r(self) -> int:
        return self.alpha.shape[0] - 1

    def to_dict(self) -> dict:
        return {"alpha": [float(a) for a in self.alpha],
                "lambda_max": self.lambda_max}

    @staticmethod
    def from_dict(d: dict) -> "ChebFilter":
        return ChebFilter(alpha=np.asarray(d["alpha"], dtype=np.float64),
                          lambda_max=float(d["lambda_max"]))


def default_lambda_max(L: LaplacianOperator) -> float:
    """Rescaling bound: the exact value 2 for the normalized Laplacian,
    a power-iteration estimate otherwise."""
    if L.kind is LaplacianKind.NORMALIZED:
        return 2.0
    if L.lambda_max_estimate is not None:
        return float(L.lambda_max_estimate)
    return estimate_lambda_max(L)


def cheb_T(j: int, x) -> np.ndarray | float:
    """Chebyshev polynomial T_j(x) by the recurrence T_j = 2x T_{j-1} - T_{j-2}.

    Arguments must lie in [-1, 1] up to a 1e-9 guard for floating spillover.
    """
    if j < 0:
        raise ValueError("degree must be nonnegative")
    arr = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(arr) > 1.0 + 1e-9):
        worst = float(np.max(np.abs(arr)))
        raise ValueError(f"argument magnitude {worst} exceeds 1 beyond tolerance")
    t_prev = np.ones_like(arr)
    if j == 0:
        return float(t_prev) if np.isscalar(x) else t_prev
    t = arr.copy()
    for _ in range(j - 1):
        t, t_prev = 2.0 * arr * t - t_prev, t
    return float(t) if np.isscalar(x) else t


def eval_cheb_poly(filt: ChebFilter, lam) -> np.ndarray | float:
    """Transfer function sum_j alpha_j T_j(2 lam / lambda_max - 1)."""
    x = 2.0 * np.asarray(lam, dtype=np.float64) / filt.lambda_max - 1.0
    if np.any(np.abs(x) > 1.0 + 1e-9):
        raise ValueError("frequency outside [0, lambda_max] beyond tolerance")
    x = np.clip(x, -1.0, 1.0)  # absorb <=1e-9 spillover at the endpoints
    out = np.zeros_like(x)
    t_prev = np.ones_like(x)
    t = x.copy()
    for j, a in enumerate(filt.alpha):
        if j == 0:
            out = out + a * t_prev
        elif j == 1:
            out = out + a * t
        else:
            t, t_prev = 2.0 * x * t - t_prev, t
            out = out + a * t
    return float(out) if np.isscalar(lam) else out


def apply_cheb(filt: ChebFilter, L: LaplacianOperator, f: np.ndarray,
               counter: OpCounter | None = None) -> np.ndarray:
    """Apply the filter by the three-term recurrence on signal vectors.

    Exactly r sparse mat-vecs by the rescaled Laplacian for order r >= 1.
    """
    f = _check_signal(L, f)
    stages = cheb_stages(L, filt.lambda_max, f, filt.r, counter)
    out = filt.alpha[0] * stages[0]
    for j in range(1, filt.alpha.shape[0]):
        out = out + filt.alpha[j] * stages[j]
    return out


def cheb_stages(L: LaplacianOperator, lambda_max: float, f: np.ndarray, r: int,
                counter: OpCounter | None = None) -> list:
    """T_j(Delta_rescaled) f for j = 0..r; shared by filtering and training."""
    scale = 2.0 / lambda_max

    def rescaled(x):
        if counter is not None:
            counter.matvecs += 1
        return scale * (L.off @ x + _dmul(L.diag, x)) - x

    stages = [np.asarray(f, dtype=np.float64)]
    if r >= 1:
        stages.append(rescaled(stages[0]))
    for _ in range(2, r + 1):
        stages.append(2.0 * rescaled(stages[-1]) - stages[-2])
    return stages
