"""Alignment matrices and hard alignments derived from them.

An alignment matrix is either a dense ``numpy.ndarray`` of shape
``(n1, n2)`` or a ``scipy.sparse.csr_matrix`` whose stored entries are
strictly positive.  Ties in every argmax / top-k selection are broken
towards the lowest column index.
"""
from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, EdgeListError, IngestionError
from .graph import PathLike, _parse_pairs

logger = logging.getLogger(__name__)

AlignmentMatrix = "np.ndarray | sp.csr_matrix"


def check_alignment(m, copy: bool = False):
    """Validate ``m`` and return it as float64 ndarray or canonical CSR.

    Sparse inputs are converted to CSR with sorted, deduplicated indices and
    explicit zeros removed.  Negative entries are rejected.
    """
    if sp.issparse(m):
        m = sp.csr_matrix(m, dtype=np.float64, copy=copy)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        if m.data.size and m.data.min() < 0:
            raise ValueError("alignment matrix has negative entries")
        return m
    arr = np.array(m, dtype=np.float64, copy=copy) if copy else np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"alignment matrix must be 2-D, got shape {arr.shape}")
    if arr.size and arr.min() < 0:
        raise ValueError("alignment matrix has negative entries")
    return arr


def _row_ids(m: sp.csr_matrix) -> np.ndarray:
    return np.repeat(np.arange(m.shape[0], dtype=np.int64), np.diff(m.indptr))


def greedy_map(m) -> np.ndarray:
    """Row-wise argmax ``pi[i] = argmax_j m[i, j]``.

    Not necessarily injective.  All-zero rows map to column 0; their count is
    logged at debug level.
    """
    m = check_alignment(m)
    n1, n2 = m.shape
    if n1 == 0 or n2 == 0:
        raise DimensionError(f"cannot extract a mapping from a {n1}x{n2} matrix")
    if not sp.issparse(m):
        pi = np.argmax(m, axis=1).astype(np.int64)
        zero_rows = int(np.count_nonzero(~m.any(axis=1)))
    else:
        pi = np.zeros(n1, dtype=np.int64)
        nonempty = np.flatnonzero(np.diff(m.indptr))
        zero_rows = n1 - nonempty.size
        if nonempty.size:
            rowmax = np.maximum.reduceat(m.data, m.indptr[nonempty])
            rows = _row_ids(m)
            full = np.zeros(n1)
            full[nonempty] = rowmax
            hits = np.flatnonzero(m.data == full[rows])
            # hits are in CSR order, so the first hit per row has the lowest column
            first_rows, first = np.unique(rows[hits], return_index=True)
            pi[first_rows] = m.indices[hits[first]]
    if zero_rows:
        logger.debug("greedy_map: %d all-zero rows mapped to column 0", zero_rows)
    return pi


def top_k_columns(m, i: int, k: int) -> list[int]:
    """Columns of row ``i`` with the ``k`` largest values, best first.

    Dense rows rank all columns; sparse rows rank their stored entries.  An
    empty sparse row behaves like an all-zero dense row.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    m = check_alignment(m)
    n1, n2 = m.shape
    if not 0 <= i < n1:
        raise IndexError(f"row {i} out of range for {n1} rows")
    if sp.issparse(m):
        lo, hi = m.indptr[i], m.indptr[i + 1]
        cols, vals = m.indices[lo:hi], m.data[lo:hi]
        if cols.size == 0:
            return list(range(min(k, n2)))
    else:
        cols, vals = np.arange(n2), m[i]
    order = np.lexsort((cols, -vals))[:k]
    return [int(c) for c in cols[order]]


def truth_ranks(m, truth) -> np.ndarray:
    """Rank of ``truth[i]`` within row ``i`` under the top-k ordering.

    Rank 0 means the true column is the row's greedy choice.  Columns that are
    not candidates (unstored sparse entries) get the largest int64 value.
    """
    m = check_alignment(m)
    n1, n2 = m.shape
    truth = np.asarray(truth, dtype=np.int64)
    if truth.shape != (n1,):
        raise DimensionError(f"truth has length {truth.size}, expected {n1}")
    if not sp.issparse(m):
        tv = m[np.arange(n1), truth]
        cols = np.arange(n2)
        better = (m > tv[:, None]) | ((m == tv[:, None]) & (cols[None, :] < truth[:, None]))
        return better.sum(axis=1)
    ranks = np.full(n1, np.iinfo(np.int64).max, dtype=np.int64)
    rows = _row_ids(m)
    is_truth = m.indices == truth[rows]
    tv = np.full(n1, np.nan)
    tv[rows[is_truth]] = m.data[is_truth]
    rv = tv[rows]
    better = (m.data > rv) | ((m.data == rv) & (m.indices < truth[rows]))
    counts = np.bincount(rows[better], minlength=n1)
    has = ~np.isnan(tv)
    ranks[has] = counts[has]
    empty = np.diff(m.indptr) == 0
    ranks[empty] = truth[empty]
    return ranks


def mapping_matrix(pi, n2: int) -> sp.csr_matrix:
    """One-hot CSR matrix with a 1 at ``(i, pi[i])``; negative entries leave row ``i`` empty."""
    pi = np.asarray(pi, dtype=np.int64)
    if pi.size and pi.max() >= n2:
        raise DimensionError(f"mapping entry {pi.max()} out of range for n2={n2}")
    rows = np.flatnonzero(pi >= 0)
    return sp.csr_matrix(
        (np.ones(rows.size), (rows, pi[rows])), shape=(pi.size, n2)
    )


def binarize(m) -> sp.csr_matrix:
    """One-hot rows at each row's greedy column."""
    m = check_alignment(m)
    return mapping_matrix(greedy_map(m), m.shape[1])


def is_binary(m) -> bool:
    m = check_alignment(m)
    vals = m.data if sp.issparse(m) else m
    return bool(np.all((vals == 0) | (vals == 1)))


def load_alignment(path: PathLike, n1: int, n2: int) -> sp.csr_matrix:
    """Read ``i j`` (value 1) or ``i j v`` lines into a sparse matrix.

    Repeated pairs are summed.
    """
    rows = _parse_pairs(path, ncols=(2, 3))
    r, c, v = [], [], []
    for lineno, i, j, val in rows:
        if i >= n1 or j >= n2:
            raise IngestionError(f"{path}:{lineno}: pair ({i}, {j}) out of bounds for {n1}x{n2}")
        if val is None:
            val = 1.0
        elif not val > 0:
            raise EdgeListError(f"{path}:{lineno}: alignment score must be positive, got {val}")
        r.append(i)
        c.append(j)
        v.append(val)
    return check_alignment(sp.csr_matrix((v, (r, c)), shape=(n1, n2)))


def save_alignment(m, path: PathLike, top_k: int | None = None) -> None:
    """Write stored (or dense nonzero) entries as ``i j v`` lines.

    ``top_k`` restricts output to each row's best ``top_k`` entries.
    """
    m = check_alignment(m)
    if not sp.issparse(m):
        m = sp.csr_matrix(m)
        m.sort_indices()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n1={m.shape[0]} n2={m.shape[1]}\n")
        for i in range(m.shape[0]):
            lo, hi = m.indptr[i], m.indptr[i + 1]
            cols, vals = m.indices[lo:hi], m.data[lo:hi]
            order = np.lexsort((cols, -vals)) if top_k else np.arange(cols.size)
            if top_k:
                order = np.sort(order[:top_k])
            for j, v in zip(cols[order], vals[order]):
                fh.write(f"{i} {j} {v:.17g}\n")


def to_dense(m) -> np.ndarray:
    m = check_alignment(m)
    return m.toarray() if sp.issparse(m) else m
