"""Alignment quality metrics, with and without ground truth."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .alignment import DimensionError, check_alignment, greedy_map, truth_ranks
from .consistency import average_mnc
from .graph import Graph


def _check_truth(m, truth) -> np.ndarray:
    truth = np.asarray(truth, dtype=np.int64)
    if truth.shape != (m.shape[0],):
        raise DimensionError(f"truth has length {truth.size}, expected n1={m.shape[0]}")
    return truth


def accuracy(m, truth) -> float:
    """Fraction of rows whose greedy column equals the true counterpart."""
    m = check_alignment(m)
    truth = _check_truth(m, truth)
    return float(np.mean(greedy_map(m) == truth))


def topk_accuracy(m, truth, k: int) -> float:
    """Fraction of rows whose true counterpart is among the row's top ``k`` columns."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    m = check_alignment(m)
    truth = _check_truth(m, truth)
    return float(np.mean(truth_ranks(m, truth) < k))


def _check_shapes(g1: Graph, g2: Graph, m) -> None:
    if m.shape != (g1.n, g2.n):
        raise DimensionError(f"alignment shape {m.shape} does not match graphs ({g1.n}, {g2.n})")


def conserved_network(g1: Graph, g2: Graph, m) -> Graph:
    """Edges of ``g2`` that are images of ``g1`` edges under the greedy alignment."""
    m = check_alignment(m)
    _check_shapes(g1, g2, m)
    pi = greedy_map(m)
    img = pi[g1.edges()]
    img = img[img[:, 0] != img[:, 1]]
    if img.size == 0:
        return Graph.empty(g2.n)
    a2 = g2.adjacency
    hit = np.asarray(a2[img[:, 0], img[:, 1]]).ravel() > 0
    return Graph.from_edges(g2.n, img[hit])


def normalized_overlap(g1: Graph, g2: Graph, m) -> float:
    """Conserved edges as a percentage of the larger edge count."""
    denom = max(g1.m, g2.m)
    if denom == 0:
        raise ValueError("normalized overlap is undefined when both graphs have no edges")
    # both counts are undirected; the symmetric-nnz factor of 2 cancels
    return 100.0 * conserved_network(g1, g2, m).m / denom


def lccc(g1: Graph, g2: Graph, m) -> int:
    """Edge count of the conserved network's largest component (by edges)."""
    return _largest_component_edges(conserved_network(g1, g2, m))


def _component_sizes(g: Graph):
    _, labels = connected_components(g.adjacency, directed=False)
    size = labels.max() + 1
    edges = np.bincount(labels, weights=g.degrees, minlength=size) // 2
    nodes = np.bincount(labels, minlength=size)
    return labels, edges.astype(np.int64), nodes


def _largest_component_edges(g: Graph) -> int:
    if g.m == 0:
        return 0
    return int(_component_sizes(g)[1].max())


def largest_conserved_component(g1: Graph, g2: Graph, m) -> np.ndarray:
    """Sorted node ids of the conserved network's largest component.

    Largest means most edges, then most nodes, then lowest node id.  An empty
    conserved network yields an empty array.
    """
    cons = conserved_network(g1, g2, m)
    if cons.m == 0:
        return np.zeros(0, dtype=np.int64)
    labels, edges, nodes = _component_sizes(cons)
    # connected_components labels in order of first node, so the first max wins ties by node id
    best = np.lexsort((np.arange(edges.size), -nodes, -edges))[0]
    return np.flatnonzero(labels == best)


@dataclass
class MetricsReport:
    avg_mnc: float
    n_ov: float
    lccc_edges: int
    accuracy: Optional[float] = None
    topk: Optional[dict] = None

    def to_dict(self) -> dict:
        d = {"avg_mnc": self.avg_mnc, "n_ov": self.n_ov, "lccc_edges": self.lccc_edges}
        if self.accuracy is not None:
            d["accuracy"] = self.accuracy
        if self.topk is not None:
            d["topk"] = {str(k): v for k, v in sorted(self.topk.items())}
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        topk = d.get("topk")
        return cls(
            avg_mnc=d["avg_mnc"],
            n_ov=d["n_ov"],
            lccc_edges=d["lccc_edges"],
            accuracy=d.get("accuracy"),
            topk=None if topk is None else {int(k): v for k, v in topk.items()},
        )


def evaluate(g1: Graph, g2: Graph, m, truth=None, ks: Sequence[int] = (1, 5, 10)) -> MetricsReport:
    """All metrics in one report; accuracy fields only when ``truth`` is given."""
    m = check_alignment(m)
    _check_shapes(g1, g2, m)
    cons = conserved_network(g1, g2, m)
    denom = max(g1.m, g2.m)
    report = MetricsReport(
        avg_mnc=average_mnc(g1, g2, m),
        n_ov=100.0 * cons.m / denom if denom else float("nan"),
        lccc_edges=_largest_component_edges(cons),
    )
    if truth is not None:
        report.accuracy = accuracy(m, truth)
        report.topk = {int(k): topk_accuracy(m, truth, k) for k in ks}
    return report
