"""Counterfactual feature-edit search with semantic-map pruning.

Given exported feature maps for a query image and a set of distractor images
from the counterfactual class, plus a pooled-affine classifier head, the
engine searches for a minimal sequence of single-cell feature replacements
that flips the prediction. Candidate edits are restricted to segmented object
cells, ordered by attribution weight scores, and pruned to the most
semantically similar fraction.
"""
from cfedit._kernels import BACKEND_NAME, HAVE_COMPILED
from cfedit.attribution import (ChannelClassWeights, WeightedSemanticMap,
                                compute_attribution, weighted_semantic_map)
from cfedit.bundle import TensorBundle, load_bundle, save_bundle
from cfedit.config import RunConfig
from cfedit.metrics import KeypointSet, MetricsReport, apd, near_kp, report, same_kp
from cfedit.search import (ClassifierHead, CounterfactualResult, EditState,
                           apply_edit, baseline_exhaustive,
                           baseline_similarity_only, classify, greedy_step,
                           prepare_search, run_counterfactual)
from cfedit.sequencing import (EditUniverse, ScoredCells, build_universe,
                               mass_shortfall, score_cells, select_distractor_cells,
                               select_query_cells)
from cfedit.similarity import (CandidatePair, SimilarityConfig, filter_top_fraction,
                               pair_log_likelihoods, similarity_loss)
from cfedit.tensors import (FeatureMap, GridMap, bilinear_resize, binarize, cell_dot,
                            masked_softmax, read_tensor, write_tensor)

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME", "HAVE_COMPILED", "__version__",
    "FeatureMap", "GridMap", "read_tensor", "write_tensor", "masked_softmax",
    "bilinear_resize", "binarize", "cell_dot",
    "ChannelClassWeights", "WeightedSemanticMap", "compute_attribution",
    "weighted_semantic_map",
    "ScoredCells", "EditUniverse", "score_cells", "select_query_cells",
    "mass_shortfall", "select_distractor_cells", "build_universe",
    "CandidatePair", "SimilarityConfig", "pair_log_likelihoods",
    "filter_top_fraction", "similarity_loss",
    "ClassifierHead", "EditState", "CounterfactualResult", "classify",
    "apply_edit", "greedy_step", "prepare_search", "run_counterfactual",
    "baseline_exhaustive", "baseline_similarity_only",
    "KeypointSet", "MetricsReport", "apd", "near_kp", "same_kp", "report",
    "TensorBundle", "load_bundle", "save_bundle", "RunConfig",
]
