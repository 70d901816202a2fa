"""Weakly supervised sparse learning for parsing images from noisy image-level tags."""
from .errors import ConfigError, InvalidInputError, NumericalError, WSSLError
from .graph import RegionGraph, SpectralBasis, build_knn_graph, normalized_laplacian, spectral_basis
from .labels import ContextMatrix, TagTable, context_matrix, context_propagate, infer_initial_labels, size_smooth
from .solver import (SolverParams, SolveReport, lgc_baseline, restricted_objective, soft_threshold_element,
                     solve_sparse_coding_column, update_labels, wssl_solve)

__version__ = "0.1.0"
