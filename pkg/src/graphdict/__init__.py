"""Graph-dictionary learning from multivariate signals.

A dictionary of graph atoms plus per-sample mixing coefficients models each
observation as a smooth signal on its own instantaneous graph; atoms and
coefficients are learned jointly with a bilinear primal-dual splitting
solver.
"""

from .graphcore import (EDGE_ORDER_TAG, EdgeSpace, adjoint_wrt_coefficients,
                        adjoint_wrt_weights, bilinear_laplacian, degree_map,
                        dual_difference, graph_filter, laplacian_from_weights,
                        pairwise_sq_dist)
from .model import (Hyperparams, SpectralBasis, build_problem,
                    freeze_dictionary, objective_value, tree_coefficients)
from .solver import (BilinearProblem, DivergenceError, SolverParams,
                     SolverState, initial_state, scaled_params, solve, step)
from .datagen import (GraphSequence, derive_seed, er_graph, lgmrf_sample,
                      make_rng, emeg_process, sbg_process,
                      generate_superposition_task)
from .evaluate import (GridSpec, grid_search, mcc, mean_instantaneous_mcc,
                       state_features, threshold_edges)

__version__ = "0.1.0"
