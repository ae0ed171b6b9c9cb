"""Matched neighborhood consistency (MNC).

For a mapping ``pi`` from G1 to G2, the mapped neighborhood of node ``i`` is
the *set* ``{pi[k] : k in N1(i)}`` and ``MNC(i, j)`` is its Jaccard
similarity with ``N2(j)``.  Two empty sets count as identical (MNC 1).
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .alignment import DimensionError, check_alignment, greedy_map, is_binary, mapping_matrix
from .graph import Graph


def _check_pair(g1: Graph, g2: Graph, shape) -> None:
    if tuple(shape) != (g1.n, g2.n):
        raise DimensionError(f"alignment shape {tuple(shape)} does not match graphs ({g1.n}, {g2.n})")


def mapped_neighborhood(g1: Graph, pi, i: int) -> set:
    """Image of ``N1(i)`` under ``pi``; negative ``pi`` entries mean unmapped."""
    return {int(pi[k]) for k in g1.neighbors(i) if pi[k] >= 0}


def mnc_pair(g1: Graph, g2: Graph, pi, i: int, j: int) -> float:
    """Set-based MNC of node ``i`` in ``g1`` and node ``j`` in ``g2``."""
    if not 0 <= i < g1.n:
        raise IndexError(f"node {i} out of range for g1 (n={g1.n})")
    if not 0 <= j < g2.n:
        raise IndexError(f"node {j} out of range for g2 (n={g2.n})")
    pi = np.asarray(pi)
    if pi.shape != (g1.n,):
        raise DimensionError(f"mapping length {pi.size} != n1={g1.n}")
    mapped = mapped_neighborhood(g1, pi, i)
    nbrs = set(g2.neighbors(j).tolist())
    union = len(mapped | nbrs)
    if union == 0:
        return 1.0
    return len(mapped & nbrs) / union


def _mapped_indicator(g1: Graph, m: sp.csr_matrix) -> sp.csr_matrix:
    # row i marks the set of G2 nodes hit by i's neighbors; duplicates collapse
    b = (g1.adjacency @ m).tocsr()
    b.data[:] = 1.0
    return b


def mnc_matrix(g1: Graph, g2: Graph, m) -> np.ndarray:
    """Dense matrix of ``MNC(i, j)`` for every pair, given a binary ``m``.

    Numerator is the matched-neighbor count ``A1 M A2`` and the denominator
    ``|mapped(i)| + deg2(j) - numerator``.  The mapped neighborhood is taken
    as a set, so colliding images are counted once; for injective ``m`` this
    is exactly ``A1 M A2 / (A1 M 1 + 1 A2 1 - A1 M A2)``.
    """
    m = check_alignment(m)
    _check_pair(g1, g2, m.shape)
    if not is_binary(m):
        raise ValueError("mnc_matrix requires a binary alignment matrix; binarize it first")
    b = _mapped_indicator(g1, sp.csr_matrix(m))
    num = np.asarray((b @ g2.adjacency).todense())
    mapped_size = np.asarray(b.sum(axis=1)).ravel()
    den = mapped_size[:, None] + g2.degrees[None, :] - num
    out = np.ones_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def node_mnc(g1: Graph, g2: Graph, pi) -> np.ndarray:
    """``MNC(i, pi[i])`` for every node ``i`` of ``g1``."""
    pi = np.asarray(pi, dtype=np.int64)
    if pi.shape != (g1.n,):
        raise DimensionError(f"mapping length {pi.size} != n1={g1.n}")
    b = _mapped_indicator(g1, mapping_matrix(pi, g2.n))
    a2 = g2.adjacency[np.clip(pi, 0, None)]
    inter = np.asarray(b.multiply(a2).sum(axis=1)).ravel()
    mapped_size = np.diff(b.indptr).astype(np.float64)
    deg = g2.degrees[np.clip(pi, 0, None)].astype(np.float64)
    union = mapped_size + deg - inter
    out = np.ones(g1.n)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def average_mnc(g1: Graph, g2: Graph, m=None, *, pi=None) -> float:
    """Mean MNC over all nodes of ``g1`` under the greedy alignment of ``m``.

    Pass ``pi`` instead of ``m`` to score a precomputed mapping.
    """
    if pi is None:
        m = check_alignment(m)
        _check_pair(g1, g2, m.shape)
        pi = greedy_map(m)
    if g1.n == 0:
        raise ValueError("average MNC is undefined for an empty graph")
    return float(node_mnc(g1, g2, pi).mean())
