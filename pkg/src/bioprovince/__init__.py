"""Biogeographic province estimation from community compositions and sample positions."""

__version__ = "0.1.0"

from .biocluster import ClusterResult, cluster, ward_linkage
from .bioprovince import ProvinceMap, predict
from .data import CompositionTable, GridSpec, SampleMeta, load_grid, load_samples
from .distance import MixParams, aitchison_distance, bio_distance_matrix, mix_distance_matrix, spatial_distance_matrix
from .errors import BioprovinceError, ConfigError, DataError, NumericalError
from .stability import PipelineParams, StabilityMap, cluster_source_homogeneity, run_pipeline, run_stability
from .tuning import alpha_saturation_curve, k_elbow_curve, tune_r

__all__ = [
    "ClusterResult", "cluster", "ward_linkage", "ProvinceMap", "predict",
    "CompositionTable", "GridSpec", "SampleMeta", "load_grid", "load_samples",
    "MixParams", "aitchison_distance", "bio_distance_matrix", "mix_distance_matrix", "spatial_distance_matrix",
    "BioprovinceError", "ConfigError", "DataError", "NumericalError",
    "PipelineParams", "StabilityMap", "cluster_source_homogeneity", "run_pipeline", "run_stability",
    "alpha_saturation_curve", "k_elbow_curve", "tune_r",
]
