"""Scikit-learn style front end for refinement."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .alignment import check_alignment, greedy_map
from .refine import RefineConfig, refine
from .validation import check_graph_pair, check_truth


class RefiNA(BaseEstimator):
    """Refine an initial alignment matrix between two graphs.

    The estimator is transductive: ``fit`` receives the initial matrix ``X``
    (shape ``(n1, n2)``) together with both graphs, and the refined scores
    are exposed as ``alignment_``.

    Parameters
    ----------
    n_iter : int, default=100
        Number of refinement iterations.
    epsilon : float or "auto", default="auto"
        Token match score added to candidate pairs every iteration.  "auto"
        picks ``10**-p`` for the smallest ``p`` with ``10**p > max(n1, n2)``.
    mode : {"dense", "sparse"}, default="dense"
    alpha : int, default=10
        Entries updated per row in sparse mode.
    normalization : {"single", "sinkhorn"}, default="single"
    sinkhorn_max_iter : int, default=1000
    sinkhorn_tol : float, default=1e-2
    early_stop_fraction : float, default=0.0
        Stop once at most this fraction of rows change their greedy match;
        0 disables early stopping.
    log_every : int, default=1
        Record trace metrics every ``log_every`` iterations.

    Attributes
    ----------
    alignment_ : ndarray or csr_matrix of shape (n1, n2)
    mapping_ : ndarray of shape (n1,)
        Greedy alignment of ``alignment_``.
    trace_ : IterationTrace
    epsilon_ : float
    n_iter_ : int
        Iterations actually run.
    """

    def __init__(self, n_iter=100, epsilon="auto", mode="dense", alpha=10,
                 normalization="single", sinkhorn_max_iter=1000, sinkhorn_tol=1e-2,
                 early_stop_fraction=0.0, log_every=1):
        self.n_iter = n_iter
        self.epsilon = epsilon
        self.mode = mode
        self.alpha = alpha
        self.normalization = normalization
        self.sinkhorn_max_iter = sinkhorn_max_iter
        self.sinkhorn_tol = sinkhorn_tol
        self.early_stop_fraction = early_stop_fraction
        self.log_every = log_every

    def to_config(self) -> RefineConfig:
        return RefineConfig(
            iterations=self.n_iter,
            epsilon=self.epsilon,
            mode=self.mode,
            alpha=self.alpha,
            normalization=self.normalization,
            sinkhorn_max_iters=self.sinkhorn_max_iter,
            sinkhorn_tolerance=self.sinkhorn_tol,
            early_stop_fraction=self.early_stop_fraction,
            log_every=self.log_every,
        )

    def fit(self, X, graph1, graph2, truth=None):
        X = check_alignment(X)
        check_graph_pair(graph1, graph2, X.shape)
        if truth is not None:
            truth = check_truth(truth, graph1.n, graph2.n)
        cfg = self.to_config()
        self.alignment_, self.trace_ = refine(graph1, graph2, X, cfg, truth)
        self.mapping_ = greedy_map(self.alignment_)
        self.epsilon_ = self.trace_.epsilon
        self.n_iter_ = self.trace_.records[-1].iter if self.trace_.records else 0
        return self

    def fit_transform(self, X, graph1, graph2, truth=None):
        return self.fit(X, graph1, graph2, truth).alignment_

    def fit_predict(self, X, graph1, graph2, truth=None) -> np.ndarray:
        return self.fit(X, graph1, graph2, truth).mapping_

    def _check_fitted(self):
        if not hasattr(self, "alignment_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def score(self, truth) -> float:
        """Accuracy of the fitted greedy alignment against ``truth``."""
        self._check_fitted()
        truth = np.asarray(truth)
        return float(np.mean(self.mapping_ == truth))
