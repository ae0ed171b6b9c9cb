"""Post-hoc refinement of network alignments by matched neighborhood consistency."""
from .alignment import (
    DimensionError,
    binarize,
    greedy_map,
    load_alignment,
    save_alignment,
    top_k_columns,
)
from .consistency import average_mnc, mnc_matrix, mnc_pair, node_mnc
from .estimator import RefiNA
from .graph import (
    Graph,
    NoiseSpec,
    apply_noise,
    load_edge_list,
    noisy_permuted_copy,
    permute,
    random_graph,
)
from .initialization import InitSpec, corrupted_truth, degree_prior, random_map
from .metrics import (
    MetricsReport,
    accuracy,
    conserved_network,
    evaluate,
    lccc,
    normalized_overlap,
    topk_accuracy,
)
from .refine import (
    IterationTrace,
    RefineConfig,
    auto_epsilon,
    mnc_update_dense,
    normalize_single_pass,
    normalize_sinkhorn,
    refine,
    refine_dense,
    refine_sparse,
)

__version__ = "0.1.0"
