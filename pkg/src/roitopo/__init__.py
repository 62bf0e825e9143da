"""Topological fingerprints of ROI time series.

Sliding-window embedding, Vietoris-Rips persistence, Wasserstein distance
matrices between persistence diagrams, rank-sum P-plots and a hybrid
1D + 2D CNN classifier.
"""

from .distance import WassersteinParams, bottleneck_distance, wasserstein_distance
from .embed import EmbeddingParams, PointCloud, sliding_window_embed
from .homology import (
    FiltrationParams,
    PersistenceDiagram,
    ResourceLimitError,
    compute_persistence,
    enclosing_radius,
    oracle_persistence,
    pairwise_distances,
)
from .ingest import (
    ClassRecipe,
    CohortDataset,
    CohortError,
    NetworkDescriptor,
    SubjectRecord,
    SyntheticSpec,
    TimeSeries,
    atlas_network,
    atlas_networks,
    generate_synthetic_cohort,
    load_cohort,
    write_cohort,
)
from .learn import (
    HybridModel,
    TrainConfig,
    evaluate,
    forward,
    gradient_check,
    init_model,
    knn_baseline,
    train,
)
from .matrices import DiagramCache, DistanceMatrix, load_matrix, pairwise_roi_matrix, pairwise_subject_matrix, save_matrix
from .stats import SignificanceMap, TestResult, significance_map, wilcoxon_rank_sum

__version__ = "0.1.0"
