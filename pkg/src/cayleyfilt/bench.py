"""Timing harness for the linear-complexity claim and the iteration sweep.

Scaling runs time one filter application per graph size on community graphs
with constant average degree (community size fixed, count scaled, cross-link
probability scaled like 1/n so edge count stays proportional to n). Medians
over >= 30 repetitions are reported; a least-squares log-log slope per
series summarizes the growth. Mat-vec counts are exact and independent of
timing noise.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

from .cayley import (
    CayleyFilter,
    JacobiConfig,
    OpCounter,
    apply_cayley_exact,
    apply_cayley_jacobi,
)
from .graphs import (
    CommunitySpec,
    Graph,
    LaplacianKind,
    LaplacianOperator,
    build_laplacian,
    generate_community_graph,
)

REPS_ENV = "CAYLEYFILT_BENCH_REPS"
WARMUP = 3
BENCH_COMMUNITY_SIZE = 25


def bench_repetitions(default: int = 30) -> int:
    """Repetition count, overridable through the environment."""
    raw = os.environ.get(REPS_ENV)
    return max(1, int(raw)) if raw else default


def scaling_graph(n: int, seed: int = 0) -> Graph:
    """Community graph of ~n vertices with size-independent average degree."""
    size = BENCH_COMMUNITY_SIZE
    k = max(1, n // size)
    p_out = min(0.5, 2.0 / max(n - size, 1))
    spec = CommunitySpec(k=k, sizes=(size,) * k, p_in=0.5,
                         p_out=p_out if k > 1 else 0.0, seed=seed)
    g, _ = generate_community_graph(spec)
    return g


def random_filter(r: int, h: float, seed: int = 0) -> CayleyFilter:
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(r) + 1j * rng.standard_normal(r)
    return CayleyFilter(c0=float(rng.standard_normal()), c=c, h=h)


@dataclass
class ScalingRow:
    n: int
    r: int
    K: int | None
    path: str
    median_s: float
    mean_s: float
    matvecs: int


@dataclass
class ScalingReport:
    rows: list
    slopes: dict   # (r, K, path) -> fitted log-log slope

    def slope(self, path: str) -> float:
        for (r, K, p), s in self.slopes.items():
            if p == path:
                return s
        raise KeyError(path)


def _time_once(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def _measure(fn, reps: int) -> tuple[float, float]:
    ctx = threadpool_limits(limits=1) if threadpool_limits else None
    try:
        for _ in range(WARMUP):
            fn()
        times = [_time_once(fn) for _ in range(reps)]
    finally:
        if ctx is not None:
            ctx.unregister()
    return float(np.median(times)), float(np.mean(times))


def bench_scaling(sizes, r: int = 3, K: int = 4, paths=("jacobi", "dense"),
                  reps: int | None = None, seed: int = 0,
                  dense_cap: int = 2000) -> ScalingReport:
    """Time filter applications across graph sizes and fit log-log slopes.

    The jacobi path runs at every size; the dense path (full materialized
    solve) is capped at dense_cap vertices. h is fixed at 0.5 / sqrt(d) per
    graph so the iteration is well inside its contraction regime.
    """
    sizes = sorted(int(n) for n in sizes)
    if len(sizes) < 4:
        raise ValueError("need at least 4 sizes for a slope fit")
    reps = reps if reps is not None else bench_repetitions()
    rows: list[ScalingRow] = []
    for n in sizes:
        g = scaling_graph(n, seed=seed)
        L = build_laplacian(g, LaplacianKind.UNNORMALIZED)
        d = float(g.degrees.max())
        filt = random_filter(r, h=0.5 / np.sqrt(max(d, 1.0)), seed=seed)
        rng = np.random.default_rng(seed + 1)
        f = rng.standard_normal(g.n)
        for path in paths:
            if path == "jacobi":
                cfg = JacobiConfig(K=K)
                counter = OpCounter()
                apply_cayley_jacobi(filt, L, f, cfg, counter)
                med, mean = _measure(
                    lambda: apply_cayley_jacobi(filt, L, f, cfg), reps)
                rows.append(ScalingRow(n=g.n, r=r, K=K, path=path,
                                       median_s=med, mean_s=mean,
                                       matvecs=counter.matvecs))
            elif path == "dense":
                if n > dense_cap:
                    continue
                med, mean = _measure(
                    lambda: apply_cayley_exact(filt, L, f,
                                               dense_cutoff=n + 1), reps)
                rows.append(ScalingRow(n=g.n, r=r, K=None, path=path,
                                       median_s=med, mean_s=mean, matvecs=0))
            else:
                raise ValueError(f"unknown path {path!r}")
    slopes = {}
    for key in {(row.r, row.K, row.path) for row in rows}:
        series = [(row.n, row.median_s) for row in rows
                  if (row.r, row.K, row.path) == key]
        series.sort()
        ns = np.log([float(a) for a, _ in series])
        ts = np.log([max(b, 1e-9) for _, b in series])
        slopes[key] = float(np.polyfit(ns, ts, 1)[0])
    return ScalingReport(rows=rows, slopes=slopes)


def bench_jacobi_sweep(orders, iteration_counts, g: Graph,
                       L: LaplacianOperator | None = None,
                       reps: int | None = None, seed: int = 0) -> list:
    """Forward error and time of the Jacobi path versus the exact solve.

    Returns one row dict per (r, K): relative L2 error against the exact
    application with identical parameters, plus median time.
    """
    L = L or build_laplacian(g, LaplacianKind.UNNORMALIZED)
    reps = reps if reps is not None else bench_repetitions(10)
    d = float(g.degrees.max())
    rng = np.random.default_rng(seed + 1)
    f = rng.standard_normal(g.n)
    nf = float(np.linalg.norm(f))
    rows = []
    for r in orders:
        filt = random_filter(int(r), h=0.5 / np.sqrt(max(d, 1.0)), seed=seed)
        ref = apply_cayley_exact(filt, L, f)
        for K in iteration_counts:
            cfg = JacobiConfig(K=int(K))
            out = apply_cayley_jacobi(filt, L, f, cfg)
            err = float(np.linalg.norm(out - ref) / nf)
            med, _ = _measure(lambda: apply_cayley_jacobi(filt, L, f, cfg),
                              reps)
            rows.append({"r": int(r), "K": int(K), "rel_error": err,
                         "median_s": med})
    return rows
