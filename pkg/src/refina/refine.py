"""Iterative refinement of an alignment matrix by matched-neighbor counts.

Each iteration multiplies every score by the number of matched neighbors
``A1 M A2``, adds a small token score ``epsilon`` so that unseen pairs can
enter the solution, and renormalizes by rows then columns.  The sparse
variant only touches the ``alpha`` highest-count pairs of every row.
"""
from __future__ import annotations

import csv
import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .alignment import DimensionError, check_alignment, greedy_map
from .consistency import node_mnc
from .graph import Graph

logger = logging.getLogger(__name__)

TRACE_HEADER = ("iter", "avg_mnc", "accuracy", "changed_rows", "wall_ms")

# target nonzeros of one row block of the sparse product
_BLOCK_NNZ = 4_000_000


@dataclass
class RefineConfig:
    iterations: int = 100
    epsilon: Union[float, str] = "auto"
    mode: str = "dense"
    alpha: int = 10
    normalization: str = "single"
    sinkhorn_max_iters: int = 1000
    sinkhorn_tolerance: float = 1e-2
    early_stop_fraction: float = 0.0
    log_every: int = 1
    prune_below: Optional[float] = None

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if isinstance(self.epsilon, str):
            if self.epsilon != "auto":
                self.epsilon = float(self.epsilon)
        if not isinstance(self.epsilon, str) and not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0 or 'auto', got {self.epsilon}")
        if self.mode not in ("dense", "sparse"):
            raise ValueError(f"mode must be 'dense' or 'sparse', got {self.mode!r}")
        if self.alpha < 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if self.normalization == "single_pass":
            self.normalization = "single"
        if self.normalization not in ("single", "sinkhorn"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.sinkhorn_max_iters < 1 or not self.sinkhorn_tolerance > 0:
            raise ValueError("sinkhorn_max_iters must be >= 1 and sinkhorn_tolerance > 0")
        if not 0.0 <= self.early_stop_fraction <= 1.0:
            raise ValueError("early_stop_fraction must lie in [0, 1]")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")

    def resolve_epsilon(self, n1: int, n2: int) -> float:
        if self.epsilon == "auto":
            return auto_epsilon(max(n1, n2))
        return float(self.epsilon)


@dataclass
class IterationRecord:
    iter: int
    avg_mnc: float
    accuracy: Optional[float]
    changed_rows: int
    wall_ms: float


@dataclass
class IterationTrace:
    """Per-iteration log; ``initial_*`` describe the input matrix."""

    records: list = field(default_factory=list)
    initial_avg_mnc: Optional[float] = None
    initial_accuracy: Optional[float] = None
    epsilon: Optional[float] = None
    stopped_early: bool = False
    # wall time of every iteration, logged or not
    iteration_ms: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_HEADER)
            for r in self.records:
                w.writerow([
                    r.iter,
                    repr(r.avg_mnc),
                    "" if r.accuracy is None else repr(r.accuracy),
                    r.changed_rows,
                    f"{r.wall_ms:.3f}",
                ])

    @classmethod
    def from_csv(cls, path) -> "IterationTrace":
        trace = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != TRACE_HEADER:
                raise ValueError(f"{path}: unexpected trace header {reader.fieldnames}")
            for row in reader:
                trace.records.append(IterationRecord(
                    iter=int(row["iter"]),
                    avg_mnc=float(row["avg_mnc"]),
                    accuracy=float(row["accuracy"]) if row["accuracy"] else None,
                    changed_rows=int(row["changed_rows"]),
                    wall_ms=float(row["wall_ms"]),
                ))
        return trace


def auto_epsilon(n: int) -> float:
    """Token score ``10**-p`` with ``p`` the smallest natural number such that ``10**p > n``.

    A row of ``n`` token scores then sums to less than 1.
    """
    if n < 1:
        raise ValueError(f"auto epsilon needs n >= 1, got {n}")
    p = len(str(int(n)))  # digits of n: smallest p with 10**p > n
    return 10.0 ** -p


def _check_graphs(g1: Graph, g2: Graph, shape) -> None:
    if tuple(shape) != (g1.n, g2.n):
        raise DimensionError(f"alignment shape {tuple(shape)} does not match graphs ({g1.n}, {g2.n})")


def matched_neighbor_counts(g1: Graph, g2: Graph, m):
    """``A1 M A2``: weighted count of neighbor pairs matched by ``m``."""
    if sp.issparse(m):
        return (g1.adjacency @ m @ g2.adjacency).tocsr()
    return np.asarray(g1.adjacency @ m @ g2.adjacency)


def mnc_update_dense(g1: Graph, g2: Graph, m) -> np.ndarray:
    """``M * (A1 M A2)`` elementwise."""
    m = check_alignment(m)
    if sp.issparse(m):
        m = m.toarray()
    _check_graphs(g1, g2, m.shape)
    return m * matched_neighbor_counts(g1, g2, m)


def _safe(s: np.ndarray) -> np.ndarray:
    return np.where(s > 0, s, 1.0)


def normalize_single_pass(m):
    """Divide every row by its sum, then every column by its sum; zero lines stay zero."""
    m = check_alignment(m, copy=True)
    if sp.issparse(m):
        _scale_rows(m, 1.0)
        _scale_cols(m, 1.0)
        return m
    m /= _safe(m.sum(axis=1))[:, None]
    m /= _safe(m.sum(axis=0))[None, :]
    return m


def _scale_rows(m: sp.csr_matrix, target: float) -> np.ndarray:
    s = np.bincount(np.repeat(np.arange(m.shape[0]), np.diff(m.indptr)), weights=m.data, minlength=m.shape[0])
    m.data /= np.repeat(_safe(s) / target, np.diff(m.indptr))
    return s


def _scale_cols(m: sp.csr_matrix, target: float) -> np.ndarray:
    s = np.bincount(m.indices, weights=m.data, minlength=m.shape[1])
    m.data /= (_safe(s) / target)[m.indices]
    return s


def normalize_sinkhorn(m, max_iters: int = 1000, tol: float = 1e-2, return_n_iter: bool = False):
    """Alternate row and column L1 normalization until sums are within ``tol``.

    Rows are driven to 1 and columns to ``n1 / n2`` (1 for square input).
    All-zero rows or columns are left alone and reported with a warning.
    """
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    m = check_alignment(m, copy=True)
    n1, n2 = m.shape
    col_target = n1 / n2 if n2 else 1.0
    sparse = sp.issparse(m)
    it = 0
    for it in range(1, max_iters + 1):
        if sparse:
            _scale_rows(m, 1.0)
            cs = _scale_cols(m, col_target)
            rs = np.bincount(np.repeat(np.arange(n1), np.diff(m.indptr)), weights=m.data, minlength=n1)
        else:
            rs0 = m.sum(axis=1)
            m /= _safe(rs0)[:, None]
            cs = m.sum(axis=0)
            m /= (_safe(cs) / col_target)[None, :]
            rs = m.sum(axis=1)
        live_r, live_c = rs > 0, cs > 0
        dev = np.abs(rs[live_r] - 1.0).max(initial=0.0)
        if dev < tol:
            break
    zero_r = int(np.count_nonzero(~live_r))
    zero_c = int(np.count_nonzero(~live_c))
    if zero_r or zero_c:
        warnings.warn(
            f"sinkhorn: skipped {zero_r} all-zero rows and {zero_c} all-zero columns",
            RuntimeWarning,
            stacklevel=2,
        )
    return (m, it) if return_n_iter else m


def _normalize(m, cfg: RefineConfig):
    if cfg.normalization == "sinkhorn":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return normalize_sinkhorn(m, cfg.sinkhorn_max_iters, cfg.sinkhorn_tolerance)
    if sp.issparse(m):
        _scale_rows(m, 1.0)
        _scale_cols(m, 1.0)
        return m
    m /= _safe(m.sum(axis=1))[:, None]
    m /= _safe(m.sum(axis=0))[None, :]
    return m


# cap on padded cells when partitioning long rows
_PAD_CELLS = 8_000_000


def _row_thresholds(data, indptr, counts, rows_sel, alpha):
    """``alpha``-th largest stored value of each row in ``rows_sel``."""
    out = np.empty(rows_sel.size)
    # rows sorted by length so each padded chunk wastes little space
    order = rows_sel[np.argsort(counts[rows_sel], kind="stable")]
    lens = counts[order]
    start = 0
    while start < order.size:
        width = int(lens[min(order.size - 1, start + max(1, _PAD_CELLS // max(lens[start], 1)) - 1)])
        stop = start + max(1, _PAD_CELLS // width)
        chunk = order[start:stop]
        width = int(counts[chunk].max())
        pad = np.full((chunk.size, width), -np.inf)
        clen = counts[chunk]
        r = np.repeat(np.arange(chunk.size), clen)
        c = np.arange(r.size) - np.repeat(np.cumsum(clen) - clen, clen)
        src = np.repeat(indptr[chunk], clen) + c
        pad[r, c] = data[src]
        kth = np.partition(pad, width - alpha, axis=1)[:, width - alpha]
        out[np.searchsorted(rows_sel, chunk)] = kth
        start = stop
    return out


def top_alpha_csr(u: sp.csr_matrix, alpha: int) -> sp.csr_matrix:
    """Keep the ``alpha`` largest stored entries of every row; ties go to the lowest column.

    Column indices of ``u`` need not be sorted; the result is canonical CSR.
    """
    n1 = u.shape[0]
    counts = np.diff(u.indptr)
    long_rows = np.flatnonzero(counts > alpha)
    if long_rows.size == 0:
        out = u.copy()
        out.sort_indices()
        return out
    rows = np.repeat(np.arange(n1), counts)
    thr = np.full(n1, -np.inf)
    thr[long_rows] = _row_thresholds(u.data, u.indptr, counts, long_rows, alpha)
    rt = thr[rows]
    keep = u.data > rt
    eq = np.flatnonzero(u.data == rt)
    if eq.size:
        need = alpha - np.bincount(rows[keep], minlength=n1)
        eq = eq[np.lexsort((u.indices[eq], rows[eq]))]
        eq_rows = rows[eq]
        rank = np.arange(eq.size) - np.searchsorted(eq_rows, eq_rows, side="left")
        keep[eq[rank < need[eq_rows]]] = True
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows[keep], minlength=n1))])
    out = sp.csr_matrix((u.data[keep], u.indices[keep], indptr), shape=u.shape)
    out.sort_indices()
    return out


def top_alpha_counts(g1: Graph, g2: Graph, m: sp.csr_matrix, alpha: int,
                     block_rows: Optional[int] = None) -> sp.csr_matrix:
    """Sparse ``A1 M A2`` restricted to the ``alpha`` largest entries per row.

    Ties go to the lowest column.  The product is formed in row blocks so
    that peak memory stays bounded regardless of ``n1 * n2``.
    """
    n1, n2 = m.shape
    a1, a2 = g1.adjacency, g2.adjacency
    if block_rows is None:
        per_row = max(1.0, g1.average_degree * (m.nnz / max(n1, 1)) * g2.average_degree)
        block_rows = max(1, int(_BLOCK_NNZ // per_row))
    blocks = []
    for start in range(0, n1, block_rows):
        blk = (a1[start:start + block_rows] @ m @ a2).tocsr()
        blk.eliminate_zeros()
        blocks.append(top_alpha_csr(blk, alpha))
    if not blocks:
        return sp.csr_matrix((n1, n2))
    u = blocks[0] if len(blocks) == 1 else sp.vstack(blocks, format="csr")
    u.sort_indices()
    return u


def sparse_step(g1: Graph, g2: Graph, m: sp.csr_matrix, alpha: int, epsilon: float,
                block_rows: Optional[int] = None) -> sp.csr_matrix:
    """One multiplicative top-``alpha`` update (before normalization).

    On the support of the update ``U`` the new value is ``M * U + epsilon``
    (pairs absent from ``M`` therefore get exactly ``epsilon``); every other
    stored entry of ``M`` is carried over unchanged.
    """
    u = top_alpha_counts(g1, g2, m, alpha, block_rows)
    ind = u.copy()
    ind.data[:] = 1.0
    on_u = m.multiply(u).tocsr()
    if epsilon > 0:
        on_u = on_u + epsilon * ind
    out = (m - m.multiply(ind) + on_u).tocsr()
    out.eliminate_zeros()
    out.sort_indices()
    return out


class _Tracker:
    """Greedy-map bookkeeping shared by both refinement loops."""

    def __init__(self, g1, g2, m0, truth, cfg):
        self.g1, self.g2, self.cfg = g1, g2, cfg
        self.truth = None if truth is None else np.asarray(truth, dtype=np.int64)
        if self.truth is not None and self.truth.shape != (g1.n,):
            raise DimensionError(f"truth has length {self.truth.size}, expected {g1.n}")
        self.pi = greedy_map(m0)
        self.trace = IterationTrace(
            initial_avg_mnc=self._mnc(self.pi),
            initial_accuracy=self._acc(self.pi),
        )

    def _mnc(self, pi):
        return float(node_mnc(self.g1, self.g2, pi).mean()) if self.g1.n else float("nan")

    def _acc(self, pi):
        if self.truth is None:
            return None
        return float(np.mean(pi == self.truth))

    def record(self, k: int, m, wall_ms: float, last: bool) -> bool:
        """Log iteration ``k``; returns True when early stopping triggers."""
        self.trace.iteration_ms.append(wall_ms)
        if k % self.cfg.log_every and not last:
            return False
        pi = greedy_map(m)
        changed = int(np.count_nonzero(pi != self.pi))
        self.pi = pi
        rec = IterationRecord(k, self._mnc(pi), self._acc(pi), changed, wall_ms)
        self.trace.records.append(rec)
        logger.debug("iter %d: mnc=%.4f acc=%s changed=%d %.1fms", k, rec.avg_mnc, rec.accuracy, changed, wall_ms)
        frac = self.cfg.early_stop_fraction
        return frac > 0 and changed <= frac * self.g1.n


def refine_dense(g1: Graph, g2: Graph, m0, cfg: Optional[RefineConfig] = None, truth=None):
    """Dense refinement; returns ``(M_K, trace)``.

    ``truth`` (optional) adds per-iteration accuracy to the trace.
    """
    cfg = cfg or RefineConfig()
    m = check_alignment(m0, copy=True)
    if sp.issparse(m):
        m = m.toarray()
    _check_graphs(g1, g2, m.shape)
    eps = cfg.resolve_epsilon(g1.n, g2.n)
    tracker = _Tracker(g1, g2, m, truth, cfg)
    tracker.trace.epsilon = eps
    a1, a2 = g1.adjacency, g2.adjacency
    for k in range(1, cfg.iterations + 1):
        t0 = time.perf_counter()
        counts = a1 @ m @ a2
        m *= counts
        del counts
        if eps:
            m += eps
        m = _normalize(m, cfg)
        wall = (time.perf_counter() - t0) * 1e3
        if tracker.record(k, m, wall, k == cfg.iterations):
            tracker.trace.stopped_early = True
            break
    return m, tracker.trace


def refine_sparse(g1: Graph, g2: Graph, m0, cfg: Optional[RefineConfig] = None, truth=None,
                  block_rows: Optional[int] = None):
    """Sparse top-``alpha`` refinement; returns ``(M_K, trace)`` with ``M_K`` in CSR."""
    cfg = cfg or RefineConfig(mode="sparse")
    m = check_alignment(sp.csr_matrix(m0) if not sp.issparse(m0) else m0, copy=True)
    _check_graphs(g1, g2, m.shape)
    eps = cfg.resolve_epsilon(g1.n, g2.n)
    tracker = _Tracker(g1, g2, m, truth, cfg)
    tracker.trace.epsilon = eps
    for k in range(1, cfg.iterations + 1):
        t0 = time.perf_counter()
        m = sparse_step(g1, g2, m, cfg.alpha, eps, block_rows)
        if cfg.prune_below is not None:
            m.data[m.data < cfg.prune_below] = 0.0
            m.eliminate_zeros()
        m = _normalize(m, cfg)
        wall = (time.perf_counter() - t0) * 1e3
        if tracker.record(k, m, wall, k == cfg.iterations):
            tracker.trace.stopped_early = True
            break
    return m, tracker.trace


def refine(g1: Graph, g2: Graph, m0, cfg: Optional[RefineConfig] = None, truth=None):
    """Dispatch on ``cfg.mode``."""
    cfg = cfg or RefineConfig()
    if cfg.mode == "sparse":
        return refine_sparse(g1, g2, m0, cfg, truth)
    return refine_dense(g1, g2, m0, cfg, truth)
