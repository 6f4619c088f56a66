"""segbench: segmentation mask scoring, majority-vote ensembling, and
noise-robustness benchmarking."""

from ._version import __version__
from .analysis import ErrorReport, ErrorThresholds, classify_errors, connected_components
from .dataset import DatasetManifest, SplitResult, augment, load_manifest, split
from .ensemble import EnsembleConfig, majority_vote, vote_margin
from .exceptions import SegbenchError
from .harness import (
    SweepConfig,
    SweepReport,
    degradation_profile,
    emit_report,
    run_sweep,
    summarize_ensemble,
)
from .masks import (
    IGNORE_LABEL,
    ImageBuffer,
    LabelMask,
    load_image,
    load_mask,
    save_image,
    save_mask,
)
from .metrics import ConfusionMatrix, IouBreakdown, accumulate, iou_per_class, merge, miou
from .noise import NoiseSpec, gaussian_noise, resolve_level, salt_pepper_noise, speckle_noise
from .synth import PredictorSpec, corrupt_iid, corrupt_structured, predict

__all__ = [
    "__version__",
    "IGNORE_LABEL",
    "ConfusionMatrix",
    "DatasetManifest",
    "EnsembleConfig",
    "ErrorReport",
    "ErrorThresholds",
    "ImageBuffer",
    "IouBreakdown",
    "LabelMask",
    "NoiseSpec",
    "PredictorSpec",
    "SegbenchError",
    "SplitResult",
    "SweepConfig",
    "SweepReport",
    "accumulate",
    "augment",
    "classify_errors",
    "connected_components",
    "corrupt_iid",
    "corrupt_structured",
    "degradation_profile",
    "emit_report",
    "gaussian_noise",
    "iou_per_class",
    "load_image",
    "load_manifest",
    "load_mask",
    "majority_vote",
    "merge",
    "miou",
    "predict",
    "resolve_level",
    "run_sweep",
    "salt_pepper_noise",
    "save_image",
    "save_mask",
    "speckle_noise",
    "split",
    "summarize_ensemble",
    "vote_margin",
]
