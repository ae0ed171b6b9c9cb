"""Input checks shared by the estimator, harness and CLI."""
from __future__ import annotations

import numpy as np

from .alignment import DimensionError
from .graph import Graph


def check_graph_pair(g1, g2, shape=None) -> None:
    """Both arguments are graphs and, if given, ``shape == (g1.n, g2.n)``."""
    for name, g in (("graph1", g1), ("graph2", g2)):
        if not isinstance(g, Graph):
            raise TypeError(f"{name} must be a Graph, got {type(g).__name__}")
    if shape is not None and tuple(shape) != (g1.n, g2.n):
        raise DimensionError(f"alignment shape {tuple(shape)} does not match graphs ({g1.n}, {g2.n})")


def check_truth(truth, n1: int, n2: int) -> np.ndarray:
    """Ground-truth mapping of length ``n1`` with entries in ``0..n2-1``."""
    truth = np.asarray(truth)
    if truth.ndim != 1 or truth.size != n1:
        raise DimensionError(f"truth must have length {n1}, got shape {truth.shape}")
    if not np.issubdtype(truth.dtype, np.integer):
        raise TypeError("truth must hold integer node ids")
    if truth.size and (truth.min() < 0 or truth.max() >= n2):
        raise DimensionError(f"truth entries must lie in 0..{n2 - 1}")
    return truth.astype(np.int64)
