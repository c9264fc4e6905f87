"""Unsupervised voxel-wise anomaly detection for multi-channel 3D volumes."""

from .baseline import BaselineModel, fit_baseline, score_baseline, z_transform
from .covariance import CovarianceModel, fit_covariance, score_covariance
from .grids import HeadMask, MultiChannelVolume, ResidualMap, ScoreMap, ZMap
from .metrics import (
    EvalReport,
    auc,
    average_precision,
    sample_score,
    voxel_task_eval,
)
from .model_store import load_model, save_model
from .nifti import read_mask, read_score_map, read_volume, write_volume
from .phantom import PhantomConfig, equicorrelation, generate_phantom
from .pipeline import PipelineConfig, PipelineError, run_pipeline
from .preprocess import normalize_study
from .projection import ProjectionModel, fit_projection, score_projection
from .stats import (
    BootstrapResult,
    PairedTestResult,
    bonferroni_adjust,
    bonferroni_threshold,
    bootstrap_compare,
    wilcoxon_signed_rank,
)

__version__ = "0.1.0"
