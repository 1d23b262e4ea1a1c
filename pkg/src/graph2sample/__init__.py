"""Two-sample hypothesis tests for random dot product graphs."""

from .alignment import (AlignmentResult, SinkhornConvergenceError, median_sign_flip, orthogonal_procrustes,
                        otp_align, sinkhorn_plan)
from .embedding import EmbeddingResult, ase, estimate_clt_covariance, select_dimension, variance_correct
from .graph import AdjacencyMatrix, GraphFormatError, RngSeed, load_graph, sample_rdpg, validate_graph
from .stats import (DegenerateInputError, MGCResult, TestResult, dcorr, double_center, ksample_transform, mgc,
                    pairwise_distances, permutation_pvalue, permutation_test, u_center)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyMatrix", "AlignmentResult", "DegenerateInputError", "EmbeddingResult", "GraphFormatError",
    "MGCResult", "RngSeed", "SinkhornConvergenceError", "TestResult", "ase", "dcorr", "double_center",
    "estimate_clt_covariance", "ksample_transform", "load_graph", "median_sign_flip", "mgc",
    "orthogonal_procrustes", "otp_align", "pairwise_distances", "permutation_pvalue", "permutation_test",
    "sample_rdpg", "select_dimension", "sinkhorn_plan", "u_center", "validate_graph", "variance_correct",
]
