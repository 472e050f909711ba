"""Cayley spectral graph filters.

A Cayley filter applies a real-valued rational transfer function of the
Laplacian: c0 plus twice the real part of a complex-coefficient polynomial
in the Cayley transform of the zoomed operator h*Delta. The transform
C(x) = (x - i) / (x + i) maps the real axis onto the unit circle, so powers
of C(h*Delta) behave like pure harmonics and the coefficients pick out
frequency bands; h dilates the spectrum first and thereby zooms the filter
onto low or high frequencies.

Three application paths are provided:

* spectral (see :mod:`cayleyfilt.spectral`) — eigendecomposition, small n;
* exact — sequential factorized solves of (h*Delta + iI) y_j = (h*Delta - iI) y_{j-1};
* jacobi — the same recursion with each solve replaced by K diagonally
  preconditioned fixed-point iterations, costing exactly (K+1)*r sparse
  mat-vecs and touching only the r*(K+1)-hop neighborhood of the input.

The module also carries the verification machinery for the approximation:
the infinity-norm contraction factor kappa of the Jacobi iteration matrix,
the a-priori error bound 2*M*kappa^K, exponential-decay certificates, and
an exact support check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from .graphs import (
    Graph,
    LaplacianKind,
    LaplacianOperator,
    bfs_distances,
    k_hop_neighborhood,
    regular_degrees,
    _dmul,
)

DENSE_SOLVE_CUTOFF = 500


class DiagonalDominanceError(ValueError):
    """The shifted normalized Laplacian is not diagonally dominant."""

    def __init__(self, row: int, row_sum: float):
        self.row = row
        self.row_sum = row_sum
        super().__init__(
            f"(h*Delta + iI) not diagonally dominant at row {row}: "
            f"|J| row sum {row_sum:.6g} >= 1"
        )


class SupportLeakError(RuntimeError):
    """Jacobi output has mass outside its guaranteed hop support."""


class DecayBoundError(RuntimeError):
    """Measured tail mass exceeded the exponential-decay bound."""


# ---------------------------------------------------------------------------
# Filter definition and pointwise transfer function
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CayleyFilter:
    """One real coefficient, r complex coefficients, and a spectral zoom h > 0."""

    c0: float
    c: np.ndarray  # (r,) complex128
    h: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=np.complex128))
        if c.ndim != 1:
            raise ValueError("coefficients must form a 1-d vector")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "c0", float(self.c0))
        object.__setattr__(self, "h", float(self.h))
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ValueError(f"spectral zoom must be positive and finite, got {self.h}")
        if not np.isfinite(self.c0) or not np.all(np.isfinite(c)):
            raise ValueError("filter coefficients must be finite")

    @property
    def r(self) -> int:
        return self.c.shape[0]

    def to_dict(self) -> dict:
        return {
            "c0": self.c0,
            "c": [[float(z.real), float(z.imag)] for z in self.c],
            "h": self.h,
        }

    @staticmethod
    def from_dict(d: dict) -> "CayleyFilter":
        c = np.array([complex(re, im) for re, im in d["c"]], dtype=np.complex128)
        return CayleyFilter(c0=float(d["c0"]), c=c, h=float(d["h"]))


def cayley_transform(h: float, lam) -> np.ndarray | complex:
    """(h*lam - i) / (h*lam + i); unit modulus for every real argument."""
    x = h * np.asarray(lam, dtype=np.float64)
    return (x - 1j) / (x + 1j)


def cayley_transform_derivative(x) -> np.ndarray | complex:
    """Derivative of the Cayley transform, 2i / (x + i)^2."""
    x = np.asarray(x, dtype=np.float64)
    return 2j / (x + 1j) ** 2


def eval_cayley_poly(filt: CayleyFilter, lam) -> np.ndarray | float:
    """Transfer function value c0 + 2 Re{sum_j c_j C(h lam)^j}; always real."""
    C = np.asarray(cayley_transform(filt.h, lam), dtype=np.complex128)
    acc = np.zeros_like(C)
    p = np.ones_like(C)
    for cj in filt.c:
        p = p * C
        acc = acc + cj * p
    out = filt.c0 + 2.0 * acc.real
    return float(out) if np.isscalar(lam) else out


def eval_cayley_laurent(filt: CayleyFilter, lam) -> np.ndarray | complex:
    """Conjugate-even Laurent form c0 + sum_j (c_j C^j + conj(c_j) C^-j).

    Mathematically identical to :func:`eval_cayley_poly`; evaluated without
    taking a real part so tests can confirm the imaginary residue vanishes.
    """
    C = np.asarray(cayley_transform(filt.h, lam), dtype=np.complex128)
    acc = np.full_like(C, filt.c0, dtype=np.complex128)
    p = np.ones_like(C)
    for cj in filt.c:
        p = p * C
        acc = acc + cj * p + np.conj(cj) / p
    return complex(acc) if np.isscalar(lam) else acc


# ---------------------------------------------------------------------------
# Shifted operator plumbing
# ---------------------------------------------------------------------------


@dataclass
class OpCounter:
    """Per-call tally of sparse operator applications."""

    matvecs: int = 0


def apply_shifted(L: LaplacianOperator, h: float, x: np.ndarray, sign: int,
                  counter: OpCounter | None = None) -> np.ndarray:
    """(h*Delta + sign*i*I) @ x using the split representation; one mat-vec."""
    if counter is not None:
        counter.matvecs += 1
    return h * (L.off @ x) + _dmul(h * L.diag + sign * 1j, x)


class ShiftedSolver:
    """Reusable factorization of (h*Delta + iI).

    Dense LU below a size cutoff, complex sparse LU above it. The matrix is
    a real symmetric operator plus an imaginary shift, hence nonsingular for
    every h, and the same factorization also solves systems in its conjugate
    (adjoint) by conjugating right-hand side and solution.
    """

    def __init__(self, L: LaplacianOperator, h: float,
                 dense_cutoff: int = DENSE_SOLVE_CUTOFF):
        self.n = L.n
        diag_c = h * L.diag + 1j
        try:
            if L.n < dense_cutoff:
                A = (h * L.off).toarray().astype(np.complex128)
                A[np.arange(L.n), np.arange(L.n)] += diag_c
                self._dense = scipy.linalg.lu_factor(A)
                self._sparse = None
            else:
                A = (h * L.off).astype(np.complex128) + sp.diags_array(diag_c)
                self._sparse = scipy.sparse.linalg.splu(A.tocsc())
                self._dense = None
        except Exception as exc:  # pragma: no cover - matrix is never singular
            raise RuntimeError("shifted-system factorization broke down") from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        """x with (h*Delta + iI) x = b."""
        if self._dense is not None:
            return scipy.linalg.lu_solve(self._dense, b)
        return self._sparse.solve(np.ascontiguousarray(b, dtype=np.complex128))

    def solve_adjoint(self, b: np.ndarray) -> np.ndarray:
        """x with (h*Delta - iI) x = b, via conjugation of the same factors."""
        return np.conj(self.solve(np.conj(b)))


@dataclass(frozen=True)
class JacobiConfig:
    """Inner-iteration count per filter power, and optional stage rescaling."""

    K: int
    normalize_each_stage: bool = False

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("iteration count K must be >= 0")


@dataclass(frozen=True)
class JacobiOperator:
    """Iteration matrix J = -(Diag(h*Delta + iI))^-1 Off(h*Delta + iI)."""

    inv_diag: np.ndarray   # (n,) complex128
    off: sp.csr_array      # off-diagonal part of h*Delta (real)
    h: float

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return -_dmul(self.inv_diag, self.off @ x)

    def dense(self) -> np.ndarray:
        return -self.inv_diag[:, None] * self.off.toarray()


def jacobi_operator(L: LaplacianOperator, h: float) -> JacobiOperator:
    if h <= 0:
        raise ValueError("spectral zoom must be positive")
    return JacobiOperator(
        inv_diag=1.0 / (h * L.diag + 1j),
        off=(h * L.off).tocsr(),
        h=float(h),
    )


# ---------------------------------------------------------------------------
# Filter application: shared stage computation plus coefficient combination
# ---------------------------------------------------------------------------


@dataclass
class JacobiTape:
    """Forward intermediates of the truncated-iteration path.

    Stores one vector bundle per stage, enough to replay the cheap inner
    iterations during reverse-mode differentiation without keeping the
    whole unrolled history in memory.
    """

    L: LaplacianOperator
    h: float
    cfg: JacobiConfig
    f: np.ndarray
    y: list            # y[0] = f, y[j] = stage outputs (post-normalization)
    e: list            # e[j-1] = Delta @ y[j-1]
    b: list            # b[j-1] = Jacobi constant term of stage j
    z_raw: list        # pre-normalization stage results (aliases y if off)
    beta: list         # per-stage rescale factors (None if normalization off)
    norm_f: np.ndarray | float | None


def _signal_norms(x: np.ndarray) -> np.ndarray | float:
    return float(np.linalg.norm(x)) if x.ndim == 1 else np.linalg.norm(x, axis=0)


def cayley_stages_exact(L: LaplacianOperator, h: float, f: np.ndarray, r: int,
                        dense_cutoff: int = DENSE_SOLVE_CUTOFF,
                        solver: ShiftedSolver | None = None):
    """Powers C(h*Delta)^j f for j = 0..r by factorized solves.

    Returns (stages, solver); stages[0] is f itself.
    """
    if solver is None and r > 0:
        solver = ShiftedSolver(L, h, dense_cutoff)
    y = np.asarray(f)
    stages = [y]
    for _ in range(r):
        rhs = apply_shifted(L, h, stages[-1], -1)
        stages.append(solver.solve(rhs))
    return stages, solver


def cayley_stages_jacobi(L: LaplacianOperator, h: float, f: np.ndarray, r: int,
                         cfg: JacobiConfig, counter: OpCounter | None = None,
                         record: bool = False):
    """Approximate powers of C(h*Delta) on f via K Jacobi steps per power.

    Each stage solves (h*Delta + iI) y_j = (h*Delta - iI) y_{j-1} with the
    fixed-point update z <- J z + b started at z = b, which costs exactly
    K + 1 sparse mat-vecs; r stages give (K+1)*r total.

    Returns (stages, tape); tape is None unless record is requested.
    """
    q = 1.0 / (h * L.diag + 1j)
    y_prev = np.asarray(f)
    stages = [y_prev]
    norm_f = _signal_norms(f) if cfg.normalize_each_stage else None
    tape = JacobiTape(L=L, h=h, cfg=cfg, f=y_prev, y=stages, e=[], b=[],
                      z_raw=[], beta=[], norm_f=norm_f) if record else None
    for _ in range(r):
        if counter is not None:
            counter.matvecs += 1
        e = L.off @ y_prev + _dmul(L.diag, y_prev)       # Delta @ y_prev
        b = _dmul(q, h * e - 1j * y_prev)
        z = b
        for _k in range(cfg.K):
            if counter is not None:
                counter.matvecs += 1
            s = L.off @ z
            z = b - h * _dmul(q, s)
        if cfg.normalize_each_stage:
            nz = _signal_norms(z)
            if isinstance(nz, np.ndarray):
                beta = np.where(nz > 0, norm_f / np.where(nz > 0, nz, 1.0), 1.0)
                y_j = z * beta[None, :]
            else:
                beta = norm_f / nz if nz > 0 else 1.0
                y_j = z * beta
        else:
            beta = None
            y_j = z
        if record:
            tape.e.append(e)
            tape.b.append(b)
            tape.z_raw.append(z)
            tape.beta.append(beta)
        stages.append(y_j)
        y_prev = y_j
    return stages, tape


def combine_stages(c0: float, c: np.ndarray, f: np.ndarray, stages: list) -> np.ndarray:
    """c0 f + 2 Re{sum_j c_j stages[j]}; the real filter output."""
    out = c0 * np.asarray(f, dtype=np.float64)
    if len(c):
        acc = c[0] * stages[1]
        for j in range(1, len(c)):
            acc = acc + c[j] * stages[j + 1]
        out = out + 2.0 * acc.real
    return out


def apply_cayley_exact(filt: CayleyFilter, L: LaplacianOperator, f: np.ndarray,
                       dense_cutoff: int = DENSE_SOLVE_CUTOFF) -> np.ndarray:
    """Filter f through exact factorized solves of the shifted systems."""
    f = _check_signal(L, f)
    stages, _ = cayley_stages_exact(L, filt.h, f, filt.r, dense_cutoff)
    return combine_stages(filt.c0, filt.c, f, stages)


def apply_cayley_jacobi(filt: CayleyFilter, L: LaplacianOperator, f: np.ndarray,
                        cfg: JacobiConfig,
                        counter: OpCounter | None = None) -> np.ndarray:
    """Filter f with K-step Jacobi approximations of each shifted solve."""
    f = _check_signal(L, f)
    stages, _ = cayley_stages_jacobi(L, filt.h, f, filt.r, cfg, counter)
    return combine_stages(filt.c0, filt.c, f, stages)


def apply_cayley_spectral(filt: CayleyFilter, spectrum, f: np.ndarray) -> np.ndarray:
    """Filter f through a precomputed dense spectrum (oracle path)."""
    from .spectral import apply_spectral_function

    return apply_spectral_function(spectrum, eval_cayley_poly(filt, spectrum.eigenvalues), f)


def _check_signal(L: LaplacianOperator, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] != L.n:
        raise ValueError(f"signal length {f.shape[0]} != n {L.n}")
    return f


# ---------------------------------------------------------------------------
# Convergence factor and error bound
# ---------------------------------------------------------------------------


def kappa(L: LaplacianOperator, h: float) -> float:
    """Infinity norm of the Jacobi iteration matrix.

    For the unnormalized Laplacian this equals h*d / sqrt(h^2 d^2 + 1) with
    d the largest weighted degree, and is always below 1. For the normalized
    kind the shifted system must be diagonally dominant, otherwise the
    contraction guarantee is void and the offending row is reported.
    """
    if h <= 0:
        raise ValueError("spectral zoom must be positive")
    if L.n == 0:
        return 0.0
    rows = (h * L.off_abs_row_sums()) / np.abs(h * L.diag + 1j)
    k = float(rows.max(initial=0.0))
    if L.kind is LaplacianKind.NORMALIZED and k >= 1.0:
        worst = int(np.argmax(rows))
        raise DiagonalDominanceError(row=worst, row_sum=k)
    return k


def coefficient_weight(filt: CayleyFilter, L: LaplacianOperator) -> float:
    """M = sum_j j |c_j|, with an extra sqrt(n) on irregular graphs."""
    j = np.arange(1, filt.r + 1, dtype=np.float64)
    s = float(np.sum(j * np.abs(filt.c)))
    if regular_degrees(L.degrees):
        return s
    return float(np.sqrt(L.n)) * s


def jacobi_error_bound(filt: CayleyFilter, L: LaplacianOperator, K: int) -> float:
    """A-priori relative error bound 2 M kappa^K for the K-step Jacobi path."""
    kap = kappa(L, filt.h)
    if kap >= 1.0:
        raise ValueError(f"contraction factor {kap:.6g} >= 1; no convergence guarantee")
    return 2.0 * coefficient_weight(filt, L) * kap ** K


# ---------------------------------------------------------------------------
# Localization: exponential decay certificate and exact support
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayCertificate:
    """Measured tail masses of a filtered delta versus the geometric bound.

    per_hop rows are (k, measured, bound) with measured the L2 mass of the
    output outside the k-hop ball and bound = c_const * gamma^k * total mass.
    Construction fails if any measured value exceeds its bound (beyond a
    1e-9 absolute slack), so an instance is itself the proof of decay.
    """

    m: int
    c_const: float
    gamma: float
    per_hop: tuple

    def holds(self, slack: float = 1e-9) -> bool:
        return all(measured <= bound + slack for _, measured, bound in self.per_hop)


def decay_certificate(filt: CayleyFilter, L: LaplacianOperator, g: Graph,
                      m: int) -> DecayCertificate:
    """Certify exponential spatial decay of the filter response to a delta at m.

    Uses the exact path for the response, gamma = kappa^(1/r), and
    c_const = 4 M / ||G delta_m||. For small k the bound may exceed the total
    mass (it is recorded anyway); for k past the eccentricity of m the tail
    is numerically zero.
    """
    if filt.r < 1:
        raise ValueError("decay certificate requires filter order r >= 1")
    kap = kappa(L, filt.h)
    if kap >= 1.0:
        raise ValueError(f"contraction factor {kap:.6g} >= 1")
    delta = np.zeros(L.n)
    delta[m] = 1.0
    out = apply_cayley_exact(filt, L, delta)
    total = float(np.linalg.norm(out))
    if total <= 1e-12:
        raise ValueError("filter output on the delta signal is numerically zero")
    gamma = kap ** (1.0 / filt.r)
    c_const = 4.0 * coefficient_weight(filt, L) / total
    dist = bfs_distances(g, m)
    ecc = int(dist.max(initial=0))
    rows = []
    for k in range(ecc + 1):
        outside = (dist > k) | (dist < 0)
        measured = float(np.linalg.norm(out[outside]))
        bound = c_const * gamma ** k * total
        if measured > bound + 1e-9:
            raise DecayBoundError(
                f"tail mass {measured:.6g} exceeds bound {bound:.6g} at hop {k}"
            )
        rows.append((k, measured, bound))
    return DecayCertificate(m=m, c_const=c_const, gamma=gamma, per_hop=tuple(rows))


def jacobi_support(filt: CayleyFilter, L: LaplacianOperator, g: Graph, m: int,
                   cfg: JacobiConfig) -> int:
    """Verify the Jacobi output on a delta at m is bitwise zero beyond r(K+1) hops.

    Each sparse mat-vec spreads support by one hop and the truncated path
    performs K+1 of them per stage, so the output must vanish identically
    outside that ball; any leak indicates an implementation bug.
    """
    if filt.r < 1:
        raise ValueError("support check requires filter order r >= 1")
    delta = np.zeros(L.n)
    delta[m] = 1.0
    out = apply_cayley_jacobi(filt, L, delta, cfg)
    radius = filt.r * (cfg.K + 1)
    inside = k_hop_neighborhood(g, m, radius)
    mask = np.ones(L.n, dtype=bool)
    mask[inside] = False
    leaked = np.flatnonzero(mask & (out != 0.0))
    if leaked.size:
        raise SupportLeakError(
            f"nonzero output at vertex {int(leaked[0])}, outside the "
            f"{radius}-hop neighborhood of {m}"
        )
    return radius
