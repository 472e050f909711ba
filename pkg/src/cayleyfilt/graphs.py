"""Sparse graph container, Laplacian operators, and synthetic graph generators.

Graphs are undirected and weighted, stored in compressed sparse row form with
both directions of every edge materialized. Laplacians are kept as a split
(diagonal vector, sparse off-diagonal part) pair: that is the shape every
downstream solver and iteration in this package consumes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.io
import scipy.sparse as sp


class GraphError(ValueError):
    """A graph or Laplacian construction violated its contract."""


# ---------------------------------------------------------------------------
# Graph container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph in CSR form.

    Attributes
    ----------
    n : int
        Vertex count.
    row_offsets : ndarray of int64, shape (n + 1,)
        CSR row pointers into ``col_indices`` / ``weights``.
    col_indices : ndarray of int64, shape (nnz,)
        Neighbor ids; every undirected edge appears in both rows.
    weights : ndarray of float64, shape (nnz,)
        Strictly positive edge weights, symmetric across directions.
    degrees : ndarray of float64, shape (n,)
        Weighted degree of each vertex (exact row sums of the adjacency).
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    weights: np.ndarray
    degrees: np.ndarray

    @staticmethod
    def from_edges(n: int, u, v, w=None) -> "Graph":
        """Build a graph from one record per undirected edge.

        Parameters
        ----------
        n : vertex count
        u, v : array-like of vertex ids (self loops rejected)
        w : array-like of positive weights, defaults to all ones
        """
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        if w is None:
            w = np.ones(u.shape[0], dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        if not (u.shape == v.shape == w.shape):
            raise GraphError("edge arrays must have matching lengths")
        if u.size and (u.min() < 0 or v.min() < 0 or max(u.max(), v.max()) >= n):
            raise GraphError("edge endpoint out of range")
        if np.any(u == v):
            raise GraphError("self loops are not allowed")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise GraphError("edge weights must be finite and strictly positive")

        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        vals = np.concatenate([w, w])
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if np.any(dup):
                i = int(np.flatnonzero(dup)[0])
                raise GraphError(f"duplicate edge ({rows[i]}, {cols[i]})")
        counts = np.bincount(rows, minlength=n)
        row_offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=row_offsets[1:])
        degrees = _row_sums(row_offsets, vals)
        return Graph(n=n, row_offsets=row_offsets, col_indices=cols,
                     weights=vals, degrees=degrees)

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return self.col_indices.shape[0] // 2

    @cached_property
    def adjacency(self) -> sp.csr_array:
        """Symmetric adjacency as a scipy CSR array (shares no state)."""
        return sp.csr_array(
            (self.weights.copy(), self.col_indices.copy(), self.row_offsets.copy()),
            shape=(self.n, self.n),
        )

    def neighbors(self, u: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[u]:self.row_offsets[u + 1]]

    def validate(self) -> None:
        """Check all structural invariants; raise GraphError on violation."""
        if self.row_offsets.shape != (self.n + 1,) or self.row_offsets[0] != 0:
            raise GraphError("malformed row offsets")
        if np.any(np.diff(self.row_offsets) < 0):
            raise GraphError("row offsets must be nondecreasing")
        nnz = int(self.row_offsets[-1])
        if self.col_indices.shape != (nnz,) or self.weights.shape != (nnz,):
            raise GraphError("index/weight arrays inconsistent with offsets")
        if np.any(self.weights <= 0) or not np.all(np.isfinite(self.weights)):
            raise GraphError("stored weights must be finite and strictly positive")
        rows = np.repeat(np.arange(self.n), np.diff(self.row_offsets))
        if np.any(rows == self.col_indices):
            raise GraphError("self loop present")
        # symmetry: the transpose must be entry-for-entry identical
        order = np.lexsort((rows, self.col_indices))
        if not (np.array_equal(self.col_indices[order], rows)
                and np.array_equal(rows[order], self.col_indices)
                and np.array_equal(self.weights[order], self.weights)):
            raise GraphError("adjacency is not symmetric")
        if not np.array_equal(self.degrees, _row_sums(self.row_offsets, self.weights)):
            raise GraphError("degrees do not equal exact row sums")


def _row_sums(row_offsets: np.ndarray, vals: np.ndarray) -> np.ndarray:
    n = row_offsets.shape[0] - 1
    out = np.zeros(n, dtype=np.float64)
    nonempty = np.flatnonzero(np.diff(row_offsets) > 0)
    if nonempty.size:
        sums = np.add.reduceat(vals, row_offsets[nonempty])
        out[nonempty] = sums
    return out


# ---------------------------------------------------------------------------
# Breadth-first search helpers
# ---------------------------------------------------------------------------


def bfs_distances(g: Graph, m: int) -> np.ndarray:
    """Hop distance from vertex m to every vertex (-1 if unreachable)."""
    if not 0 <= m < g.n:
        raise GraphError(f"vertex {m} out of range")
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[m] = 0
    frontier = np.array([m], dtype=np.int64)
    level = 0
    while frontier.size:
        level += 1
        starts = g.row_offsets[frontier]
        stops = g.row_offsets[frontier + 1]
        if int(np.sum(stops - starts)) == 0:
            break
        neigh = g.col_indices[_concat_ranges(starts, stops)]
        fresh = np.unique(neigh[dist[neigh] < 0])
        if fresh.size == 0:
            break
        dist[fresh] = level
        frontier = fresh
    return dist


def _concat_ranges(starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    total = int(np.sum(stops - starts))
    out = np.empty(total, dtype=np.int64)
    pos = 0
    for s, e in zip(starts.tolist(), stops.tolist()):
        out[pos:pos + (e - s)] = np.arange(s, e)
        pos += e - s
    return out


def k_hop_neighborhood(g: Graph, m: int, k: int) -> np.ndarray:
    """Sorted vertex ids at hop distance <= k from m (always includes m)."""
    if k < 0:
        raise GraphError("hop count must be nonnegative")
    dist = bfs_distances(g, m)
    return np.flatnonzero((dist >= 0) & (dist <= k)).astype(np.int64)


def eccentricity(g: Graph, m: int) -> int:
    """Largest finite hop distance from m (0 for an isolated vertex)."""
    dist = bfs_distances(g, m)
    return int(dist.max(initial=0))


def max_degree(g: Graph) -> float:
    """Largest weighted degree (0 for an edgeless graph)."""
    return float(g.degrees.max(initial=0.0))


def regular_degrees(degrees: np.ndarray, rtol: float = 1e-12) -> bool:
    """True when all weighted degrees agree to relative tolerance rtol."""
    if degrees.size == 0:
        return True
    dmax = float(degrees.max())
    dmin = float(degrees.min())
    return (dmax - dmin) <= rtol * max(dmax, 1.0)


def is_regular(g: Graph, rtol: float = 1e-12) -> bool:
    """True when the graph's weighted degrees are all equal (within rtol)."""
    return regular_degrees(g.degrees, rtol)


# ---------------------------------------------------------------------------
# Laplacians
# ---------------------------------------------------------------------------


class LaplacianKind(enum.Enum):
    UNNORMALIZED = "unnormalized"
    NORMALIZED = "normalized"
    SCALED_UNNORMALIZED = "scaled_unnormalized"


@dataclass(frozen=True)
class LaplacianOperator:
    """A graph Laplacian split into diagonal and off-diagonal parts.

    ``dense() == diag(diag) + off``. The split form matches what the complex
    shifted systems and Jacobi iterations downstream need, so it is the
    canonical representation rather than a full sparse matrix.
    """

    kind: LaplacianKind
    diag: np.ndarray            # (n,) float64
    off: sp.csr_array           # off-diagonal part, same sparsity as adjacency
    n: int
    degrees: np.ndarray         # weighted degrees of the underlying graph
    lambda_max_estimate: float | None = None

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.off @ x + _dmul(self.diag, x)

    def dense(self) -> np.ndarray:
        return self.off.toarray() + np.diag(self.diag)

    def off_abs_row_sums(self) -> np.ndarray:
        """Row sums of |off|; used for infinity-norm contraction factors."""
        a = sp.csr_array(
            (np.abs(self.off.data), self.off.indices, self.off.indptr),
            shape=(self.n, self.n),
        )
        return np.asarray(a.sum(axis=1)).reshape(-1)


def _dmul(d: np.ndarray, x: np.ndarray) -> np.ndarray:
    """diag(d) @ x for x of shape (n,) or (n, b)."""
    return d * x if x.ndim == 1 else d[:, None] * x


def build_laplacian(
    g: Graph,
    kind: LaplacianKind,
    lambda_max: float | None = None,
) -> LaplacianOperator:
    """Construct the requested Laplacian variant of g.

    Unnormalized is degree matrix minus adjacency; normalized is its
    symmetric degree rescaling with unit diagonal; scaled-unnormalized
    divides the unnormalized operator by lambda_max / 2 so the spectrum
    lands in roughly [0, 2] while staying positive semidefinite.

    Raises
    ------
    GraphError
        For the normalized kind when the graph has an isolated vertex
        (its diagonal rescaling is undefined; this is not silently zeroed).
    """
    adj = g.adjacency
    if kind is LaplacianKind.UNNORMALIZED:
        off = -adj
        return LaplacianOperator(kind=kind, diag=g.degrees.copy(), off=off.tocsr(),
                                 n=g.n, degrees=g.degrees.copy())
    if kind is LaplacianKind.NORMALIZED:
        isolated = np.flatnonzero(g.degrees == 0)
        if isolated.size:
            raise GraphError(
                f"normalized Laplacian undefined: vertex {int(isolated[0])} is isolated"
            )
        dinv = 1.0 / np.sqrt(g.degrees)
        off = -(sp.diags_array(dinv) @ adj @ sp.diags_array(dinv))
        return LaplacianOperator(kind=kind, diag=np.ones(g.n), off=off.tocsr(),
                                 n=g.n, degrees=g.degrees.copy())
    if kind is LaplacianKind.SCALED_UNNORMALIZED:
        base = build_laplacian(g, LaplacianKind.UNNORMALIZED)
        lam = lambda_max if lambda_max is not None else estimate_lambda_max(base)
        if lam <= 0:
            raise GraphError("scaled Laplacian requires a positive spectral bound")
        scale = 2.0 / lam
        return LaplacianOperator(
            kind=kind, diag=scale * base.diag, off=(scale * base.off).tocsr(),
            n=g.n, degrees=g.degrees.copy(), lambda_max_estimate=float(lam),
        )
    raise GraphError(f"unknown Laplacian kind {kind!r}")


def estimate_lambda_max(L: LaplacianOperator, iters: int = 50,
                        rtol: float = 1e-6) -> float:
    """Largest-eigenvalue estimate by power iteration, inflated by 1%.

    The inflation keeps rescalings of the form 2*lambda/estimate - 1 inside
    [-1, 1] even when the iteration stops short of full convergence.
    """
    if L.n == 0:
        return 0.0
    rng = np.random.default_rng(0)
    v = rng.standard_normal(L.n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = L.matvec(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new = float(v @ w)
        v = w / nw
        if abs(new - lam) <= rtol * max(abs(new), 1e-30):
            lam = new
            break
        lam = new
    return 1.01 * lam


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CommunitySpec:
    """Planted-partition sampling parameters.

    Intra-community pairs receive an edge with probability p_in, pairs that
    straddle communities with probability p_out; every community is resampled
    until internally connected (bounded retries).
    """

    k: int
    sizes: tuple
    p_in: float
    p_out: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if self.k <= 0 or len(self.sizes) != self.k:
            raise GraphError("sizes must list one count per community")
        if any(s < 2 for s in self.sizes):
            raise GraphError("all community sizes must be >= 2")
        if not (0 <= self.p_out < self.p_in <= 1):
            raise GraphError("need 0 <= p_out < p_in <= 1")

    @property
    def n(self) -> int:
        return int(sum(self.sizes))

    @staticmethod
    def default(seed: int = 7) -> "CommunitySpec":
        """15 communities of 15 vertices; dense inside, sparse across."""
        return CommunitySpec(k=15, sizes=(15,) * 15, p_in=0.5, p_out=0.01,
                             seed=seed)

    def to_dict(self) -> dict:
        return {"k": self.k, "sizes": list(self.sizes), "p_in": self.p_in,
                "p_out": self.p_out, "seed": self.seed}

    @staticmethod
    def from_dict(d: dict) -> "CommunitySpec":
        return CommunitySpec(k=int(d["k"]), sizes=tuple(d["sizes"]),
                             p_in=float(d["p_in"]), p_out=float(d["p_out"]),
                             seed=int(d["seed"]))


def generate_community_graph(
    spec: CommunitySpec, max_retries: int = 50,
) -> tuple[Graph, np.ndarray]:
    """Sample a planted-partition graph; returns (graph, community labels).

    Deterministic for a fixed spec (single RNG stream, fixed draw order).
    Each community's internal edge set is redrawn until connected; a
    community that stays disconnected after max_retries attempts raises.
    """
    rng = np.random.default_rng(spec.seed)
    offsets = np.concatenate([[0], np.cumsum(spec.sizes)]).astype(np.int64)
    labels = np.repeat(np.arange(spec.k, dtype=np.int64), spec.sizes)

    edges_u: list[np.ndarray] = []
    edges_v: list[np.ndarray] = []
    for c in range(spec.k):
        lo, size = int(offsets[c]), spec.sizes[c]
        iu, iv = np.triu_indices(size, k=1)
        for attempt in range(max_retries + 1):
            mask = rng.random(iu.shape[0]) < spec.p_in
            uu, vv = iu[mask], iv[mask]
            if _is_connected(size, uu, vv):
                edges_u.append(uu + lo)
                edges_v.append(vv + lo)
                break
        else:
            raise GraphError(
                f"community {c} not connected after {max_retries} retries"
            )
    for a in range(spec.k):
        for b in range(a + 1, spec.k):
            na, nb = spec.sizes[a], spec.sizes[b]
            mask = rng.random(na * nb) < spec.p_out
            if not mask.any():
                continue
            flat = np.flatnonzero(mask)
            edges_u.append(offsets[a] + flat // nb)
            edges_v.append(offsets[b] + flat % nb)

    u = np.concatenate(edges_u) if edges_u else np.empty(0, np.int64)
    v = np.concatenate(edges_v) if edges_v else np.empty(0, np.int64)
    return Graph.from_edges(spec.n, u, v), labels


def _is_connected(n: int, u: np.ndarray, v: np.ndarray) -> bool:
    parent = np.arange(n)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    components = n
    for a, b in zip(u.tolist(), v.tolist()):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            components -= 1
    return components == 1


def generate_grid_graph(rows: int, cols: int) -> Graph:
    """Unit-weight grid with 8-neighbor connectivity."""
    if rows < 1 or cols < 1:
        raise GraphError("grid dimensions must be >= 1")
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    r, c = r.ravel(), c.ravel()
    us, vs = [], []
    # each undirected edge recorded once: E, SW, S, SE offsets
    for dr, dc in ((0, 1), (1, -1), (1, 0), (1, 1)):
        rr, cc = r + dr, c + dc
        ok = (rr >= 0) & (rr < rows) & (cc >= 0) & (cc < cols)
        us.append((r[ok] * cols + c[ok]))
        vs.append((rr[ok] * cols + cc[ok]))
    u = np.concatenate(us)
    v = np.concatenate(vs)
    return Graph.from_edges(rows * cols, u, v)


# ---------------------------------------------------------------------------
# Graph I/O: Matrix Market adjacency + plain-text labels
# ---------------------------------------------------------------------------


def write_graph(path, g: Graph) -> None:
    """Write the adjacency in symmetric real Matrix Market coordinate form."""
    coo = sp.coo_array(g.adjacency)
    keep = coo.row <= coo.col
    upper = sp.coo_matrix(
        (coo.data[keep], (coo.row[keep], coo.col[keep])), shape=(g.n, g.n)
    )
    scipy.io.mmwrite(str(path), upper, symmetry="symmetric", precision=17)


def read_graph(path) -> Graph:
    """Read an adjacency written by write_graph (or any symmetric real .mtx)."""
    m = scipy.io.mmread(str(path))
    coo = sp.coo_array(m)
    if coo.shape[0] != coo.shape[1]:
        raise GraphError("adjacency matrix must be square")
    keep = coo.row < coo.col
    diag = (coo.row == coo.col)
    if np.any(coo.data[diag] != 0):
        raise GraphError("self loops are not allowed")
    # mmread already mirrored symmetric storage; keep one triangle
    g = Graph.from_edges(coo.shape[0], coo.row[keep], coo.col[keep],
                         coo.data[keep])
    g.validate()
    return g


def write_labels(path, labels: np.ndarray) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for x in np.asarray(labels, dtype=np.int64):
            fh.write(f"{int(x)}\n")


def read_labels(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        return np.array([int(line.strip()) for line in fh if line.strip()],
                        dtype=np.int64)
