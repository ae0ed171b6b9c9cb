"""Undirected graphs, edge-list I/O, relabeling and noise injection.

Graphs are stored in compressed form: ``indptr`` / ``indices`` arrays where
``indices[indptr[i]:indptr[i + 1]]`` is the sorted neighbor list of node
``i``.  All randomness goes through :func:`numpy.random.default_rng`
(PCG64), so results replay across platforms for a fixed seed.
"""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, EdgeListError, IngestionError

PathLike = Union[str, "os.PathLike[str]"]


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected unweighted graph on nodes ``0..n-1``."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    _adj: sp.csr_matrix = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        """Build a graph from an iterable or ``(m, 2)`` array of node pairs.

        Edges are symmetrized and deduplicated; self-loops are dropped.
        """
        if n < 0:
            raise ValueError(f"node count must be nonnegative, got {n}")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError(f"edge endpoint out of range for n={n}")
        e = e[e[:, 0] != e[:, 1]]
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        adj = sp.csr_matrix(
            (np.ones(rows.size, dtype=np.float64), (rows, cols)), shape=(n, n)
        )
        adj.sum_duplicates()
        adj.data[:] = 1.0
        adj.sort_indices()
        return cls(n, adj.indptr.astype(np.int64), adj.indices.astype(np.int64))

    @classmethod
    def empty(cls, n: int = 0) -> "Graph":
        return cls(n, np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64))

    @property
    def m(self) -> int:
        return int(self.indices.size // 2)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def average_degree(self) -> float:
        return 2.0 * self.m / self.n if self.n else 0.0

    def neighbors(self, i: int) -> np.ndarray:
        if not 0 <= i < self.n:
            raise IndexError(f"node {i} out of range for n={self.n}")
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric binary adjacency matrix (float64 CSR, cached)."""
        if self._adj is None:
            adj = sp.csr_matrix(
                (np.ones(self.indices.size), self.indices, self.indptr),
                shape=(self.n, self.n),
            )
            object.__setattr__(self, "_adj", adj)
        return self._adj

    def edges(self) -> np.ndarray:
        """Edge array of shape ``(m, 2)`` with ``u < v``, lexicographically sorted."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        keep = rows < self.indices
        return np.column_stack([rows[keep], self.indices[keep]])

    def edge_set(self) -> set:
        return {(int(u), int(v)) for u, v in self.edges()}

    def check(self) -> None:
        """Full scan of the structural invariants; raises ``AssertionError``."""
        assert self.indptr.shape == (self.n + 1,)
        assert self.indptr[0] == 0 and self.indptr[-1] == self.indices.size
        for i in range(self.n):
            nb = self.neighbors(i)
            assert np.all(np.diff(nb) > 0), f"neighbors of {i} not strictly sorted"
            assert not np.any(nb == i), f"self-loop at {i}"
        rows = np.repeat(np.arange(self.n), self.degrees)
        fwd = set(zip(rows.tolist(), self.indices.tolist()))
        assert all((v, u) in fwd for u, v in fwd), "adjacency not symmetric"

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    def __hash__(self):
        return hash((self.n, self.indices.tobytes()))

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


@dataclass(frozen=True)
class NoiseSpec:
    """Edge noise applied to a graph copy.

    ``remove_edges`` deletes each edge independently with probability ``p``;
    ``add_edges`` inserts ``ceil(p * m)`` uniformly random non-edges.
    """

    kind: str = "remove_edges"
    p: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("remove_edges", "add_edges"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"noise probability must lie in [0, 1], got {self.p}")


_HEADER = re.compile(r"#\s*n=(\d+)")


def _parse_pairs(path: PathLike, ncols=(2,), header: Optional[dict] = None) -> list:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                hit = _HEADER.match(s)
                if hit and header is not None:
                    header["n"] = int(hit.group(1))
                continue
            parts = s.split()
            if len(parts) not in ncols:
                raise EdgeListError(f"{path}:{lineno}: expected {' or '.join(map(str, ncols))} fields, got {len(parts)}")
            try:
                u, v = int(parts[0]), int(parts[1])
                val = float(parts[2]) if len(parts) == 3 else None
            except ValueError:
                raise EdgeListError(f"{path}:{lineno}: cannot parse {s!r}") from None
            if u < 0 or v < 0:
                raise EdgeListError(f"{path}:{lineno}: negative node id in {s!r}")
            rows.append((lineno, u, v, val))
    return rows


def load_edge_list(path: PathLike) -> Graph:
    """Read a whitespace-separated ``u v`` edge list.

    Node ids are taken literally: the graph spans ``0..max_id`` and ids that
    never appear become isolated nodes.  ``#`` lines are comments, except
    that a ``# n=<count>`` line (as written by :func:`save_edge_list`)
    extends the node range so trailing isolated nodes survive a round trip.
    """
    header: dict = {}
    rows = _parse_pairs(path, header=header)
    edges = np.array([(u, v) for _, u, v, _ in rows], dtype=np.int64).reshape(-1, 2)
    n = int(edges.max()) + 1 if edges.size else 0
    return Graph.from_edges(max(n, header.get("n", 0)), edges)


def save_edge_list(g: Graph, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={g.n} m={g.m}\n")
        for u, v in g.edges():
            fh.write(f"{u} {v}\n")


def check_permutation(perm, n: int | None = None) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    if perm.ndim != 1:
        raise ValueError("permutation must be one-dimensional")
    if n is not None and perm.size != n:
        raise DimensionError(f"permutation has length {perm.size}, expected {n}")
    if perm.size and not np.array_equal(np.sort(perm), np.arange(perm.size)):
        raise ValueError("array is not a permutation of 0..n-1")
    return perm


def random_permutation(n: int, seed=None) -> np.ndarray:
    return np.random.default_rng(seed).permutation(n).astype(np.int64)


def permute(g: Graph, perm) -> Graph:
    """Relabel node ``i`` as ``perm[i]``; edge ``(i, j)`` becomes ``(perm[i], perm[j])``."""
    perm = check_permutation(perm, g.n)
    return Graph.from_edges(g.n, perm[g.edges()])


def inverse_permutation(perm) -> np.ndarray:
    perm = check_permutation(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return inv


def load_permutation(path: PathLike, n1: int | None = None) -> np.ndarray:
    """Read ``i j`` correspondence lines into an array ``truth[i] = j``.

    Every node ``0..n1-1`` must be listed exactly once.  The result is a
    mapping; it is not required to be injective when the graphs differ in size.
    """
    rows = _parse_pairs(path)
    size = n1 if n1 is not None else (max(r[1] for r in rows) + 1 if rows else 0)
    truth = np.full(size, -1, dtype=np.int64)
    for lineno, i, j, _ in rows:
        if i >= size:
            raise IngestionError(f"{path}:{lineno}: node {i} out of range for n1={size}")
        if truth[i] != -1:
            raise EdgeListError(f"{path}:{lineno}: node {i} listed twice")
        truth[i] = j
    missing = np.flatnonzero(truth < 0)
    if missing.size:
        raise IngestionError(f"{path}: no correspondence for node {missing[0]}")
    return truth


def save_permutation(perm, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in enumerate(np.asarray(perm)):
            fh.write(f"{i} {j}\n")


def apply_noise(g: Graph, spec: NoiseSpec) -> Graph:
    """Return a noisy copy of ``g``; a pure function of ``(g, spec)``."""
    rng = np.random.default_rng(spec.seed)
    edges = g.edges()
    if spec.kind == "remove_edges":
        keep = rng.random(edges.shape[0]) >= spec.p
        return Graph.from_edges(g.n, edges[keep])
    return _add_random_edges(g, edges, math.ceil(spec.p * g.m), rng)


def _add_random_edges(g: Graph, edges: np.ndarray, k: int, rng) -> Graph:
    n = g.n
    capacity = n * (n - 1) // 2 - g.m
    if k > capacity:
        raise ValueError(f"cannot add {k} edges: only {capacity} non-edges exist")
    if k == 0:
        return Graph.from_edges(n, edges)
    existing = set((edges[:, 0] * n + edges[:, 1]).tolist())
    added: list[int] = []
    seen: set[int] = set()
    while len(added) < k:
        batch = rng.integers(0, n, size=(2 * (k - len(added)) + 16, 2))
        for u, v in batch.tolist():
            if u == v:
                continue
            if u > v:
                u, v = v, u
            key = u * n + v
            if key in existing or key in seen:
                continue
            seen.add(key)
            added.append(key)
            if len(added) == k:
                break
    new = np.array(added, dtype=np.int64)
    return Graph.from_edges(n, np.vstack([edges, np.column_stack([new // n, new % n])]))


def random_graph(n: int, avg_degree: float, seed=None) -> Graph:
    """Erdos-Renyi ``G(n, q)`` with ``q = avg_degree / (n - 1)``.

    Edge count is drawn from the binomial law, then that many distinct pairs
    are sampled uniformly, which is equivalent to independent edge trials.
    """
    if n < 0 or avg_degree < 0:
        raise ValueError("n and avg_degree must be nonnegative")
    if n <= 1:
        if avg_degree > 0:
            raise ValueError(f"avg_degree {avg_degree} exceeds n - 1 = {max(n - 1, 0)}")
        return Graph.empty(n)
    if avg_degree > n - 1:
        raise ValueError(f"avg_degree {avg_degree} exceeds n - 1 = {n - 1}")
    rng = np.random.default_rng(seed)
    q = avg_degree / (n - 1)
    total = n * (n - 1) // 2
    m = int(rng.binomial(total, q))
    if m == total:
        iu = np.triu_indices(n, 1)
        return Graph.from_edges(n, np.column_stack(iu))
    keys = _sample_pair_keys(total, m, rng)
    u, v = _unrank_pairs(keys, n)
    return Graph.from_edges(n, np.column_stack([u, v]))


def _sample_pair_keys(total: int, m: int, rng) -> np.ndarray:
    if m > total // 2:
        return np.sort(rng.choice(total, size=m, replace=False))
    keys = np.unique(rng.integers(0, total, size=m))
    while keys.size < m:
        extra = rng.integers(0, total, size=m - keys.size)
        keys = np.unique(np.concatenate([keys, extra]))
    return keys


def _unrank_pairs(keys: np.ndarray, n: int):
    # key k indexes the strict upper triangle row-major
    keys = keys.astype(np.int64)
    row_start = np.arange(n, dtype=np.int64)
    row_start = row_start * (2 * n - row_start - 1) // 2
    u = np.searchsorted(row_start, keys, side="right") - 1
    v = keys - row_start[u] + u + 1
    return u, v


def noisy_permuted_copy(g: Graph, noise: NoiseSpec, perm_seed=None):
    """Permute ``g`` randomly, then apply ``noise``.

    Returns ``(g2, truth)`` where node ``i`` of ``g`` corresponds to
    ``truth[i]`` in ``g2``.  Disconnected copies are kept as produced.
    """
    truth = random_permutation(g.n, perm_seed)
    return apply_noise(permute(g, truth), noise), truth
