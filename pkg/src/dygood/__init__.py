"""Evidential, spectrum-aware contrastive OOD detection for discrete-time dynamic graphs."""

from .config import ExperimentConfig, load_config, save_config
from .edl import DirichletOpinion, collect_evidence, expected_probability, to_opinion, uncertainty
from .graph import (
    DynamicGraphSequence,
    EdgeListSchema,
    GraphSnapshot,
    SnapshotWindow,
    load_sequence,
    load_temporal_edgelist,
    normalize_propagation,
    save_sequence,
    window,
)
from .losses import LossBreakdown, ce_edl, contrastive, kl_to_uniform, total_loss
from .metrics import MetricsReport, aupr, auroc, detect, f1, fpr95
from .oodgen import FISpec, SBMSpec, fi_generate, make_ood_testset, sm_generate
from .spectral import SpectralDecomposition, augment, eigendecompose, laplacian, negative_window
from .synthetic import SyntheticSpec, make_synthetic
from .training import TrainingState, evaluate, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"
