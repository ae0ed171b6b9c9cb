"""Initial alignment matrices for when no external aligner output is at hand."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .alignment import check_alignment, load_alignment, mapping_matrix
from .graph import Graph


def degree_prior_k(n1: int, n2: int) -> int:
    """``floor(log2((n1 + n2) / 2))``, at least 1."""
    return max(1, int(math.floor(math.log2((n1 + n2) / 2))))


def degree_prior(g1: Graph, g2: Graph, k: Optional[int] = None) -> sp.csr_matrix:
    """For every node of ``g1``, the ``k`` nodes of ``g2`` with the closest degree.

    Scores are ``1 / (1 + |deg1(i) - deg2(j)|)``; ties in degree gap go to the
    lowest node id.  ``k`` defaults to :func:`degree_prior_k`.
    """
    if g1.n == 0 or g2.n == 0:
        raise ValueError("degree prior needs two non-empty graphs")
    k = min(k or degree_prior_k(g1.n, g2.n), g2.n)
    d1, d2 = g1.degrees, g2.degrees
    ids = np.arange(g2.n, dtype=np.int64)
    rows, cols, vals = [], [], []
    # all nodes sharing a degree share a candidate list
    for d in np.unique(d1):
        gap = np.abs(d2 - d)
        cand = np.lexsort((ids, gap))[:k]
        members = np.flatnonzero(d1 == d)
        rows.append(np.repeat(members, k))
        cols.append(np.tile(cand, members.size))
        vals.append(np.tile(1.0 / (1.0 + gap[cand]), members.size))
    m = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(g1.n, g2.n),
    )
    return check_alignment(m)


def corrupted_truth(truth, fraction: float, n2: Optional[int] = None, seed=None) -> sp.csr_matrix:
    """Ground-truth one-hot matrix with ``ceil(fraction * n)`` rows reassigned.

    Reassigned rows are chosen uniformly without replacement and sent to a
    uniformly random column, which may coincide with the true one.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    truth = np.asarray(truth, dtype=np.int64)
    n = truth.size
    n2 = n if n2 is None else n2
    rng = np.random.default_rng(seed)
    pi = truth.copy()
    n_bad = math.ceil(fraction * n)
    if n_bad:
        rows = rng.choice(n, size=n_bad, replace=False)
        pi[rows] = rng.integers(0, n2, size=n_bad)
    return mapping_matrix(pi, n2)


def random_map(n1: int, n2: int, seed=None) -> sp.csr_matrix:
    """One-hot rows at uniformly random columns."""
    if n1 < 1 or n2 < 1:
        raise ValueError("random_map needs n1, n2 >= 1")
    rng = np.random.default_rng(seed)
    return mapping_matrix(rng.integers(0, n2, size=n1), n2)


@dataclass(frozen=True)
class InitSpec:
    kind: str = "corrupted_truth"
    corruption_fraction: float = 0.3
    seed: int = 0
    path: Optional[str] = None

    def __post_init__(self):
        kinds = ("degree_prior", "corrupted_truth", "random_map", "external_file")
        if self.kind not in kinds:
            raise ValueError(f"unknown init kind {self.kind!r}; expected one of {kinds}")
        if not 0.0 <= self.corruption_fraction <= 1.0:
            raise ValueError("corruption_fraction must lie in [0, 1]")
        if (self.kind == "external_file") != (self.path is not None):
            raise ValueError("path is required for, and only for, kind='external_file'")


def make_initial(spec: InitSpec, g1: Graph, g2: Graph, truth=None) -> sp.csr_matrix:
    if spec.kind == "degree_prior":
        return degree_prior(g1, g2)
    if spec.kind == "random_map":
        return random_map(g1.n, g2.n, spec.seed)
    if spec.kind == "external_file":
        return load_alignment(spec.path, g1.n, g2.n)
    if truth is None:
        raise ValueError("corrupted_truth initialization needs a ground-truth mapping")
    return corrupted_truth(truth, spec.corruption_fraction, g2.n, spec.seed)
