"""Sign gesture recognition from skeletal motion and hand-patch video.

Axis-independent LSTMs over per-axis joint series, a wrist-origin spatial
augmentation, a two-stream 3D CNN over hand volumes, max-score fusion, a
handcrafted-feature baseline, a synthetic multi-subject data generator,
and a cross-subject evaluation harness; all training runs on a small
float64 autodiff kernel written here.
"""

from .data import (
    Dataset,
    SignSample,
    SkeletonFrame,
    load_dataset,
    named_rng,
    save_dataset,
    split_adaptation,
    split_cross_subject,
)
from .evaluate import (
    EvalReport,
    ExperimentResult,
    adaptation_curve,
    cross_subject_experiment,
    evaluate,
    export_embeddings,
)
from .joints import NUM_JOINTS, UPPER_BODY_JOINTS, JointId
from .models import (
    ARCHITECTURES,
    CnnConfig,
    Hyperparams,
    TrainedModel,
    extract_features126,
    fuse_max,
    train,
)
from .preprocess import (
    SegmentParams,
    axis_split,
    build_hand_volumes,
    resample_uniform,
    segment_stream,
    select_joints,
    select_low_motion_frames,
    spatial_augment,
)
from .synthetic import SynthConfig, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "ARCHITECTURES",
    "CnnConfig",
    "Dataset",
    "EvalReport",
    "ExperimentResult",
    "Hyperparams",
    "JointId",
    "NUM_JOINTS",
    "SegmentParams",
    "SignSample",
    "SkeletonFrame",
    "SynthConfig",
    "TrainedModel",
    "UPPER_BODY_JOINTS",
    "adaptation_curve",
    "axis_split",
    "build_hand_volumes",
    "cross_subject_experiment",
    "evaluate",
    "export_embeddings",
    "extract_features126",
    "fuse_max",
    "generate_synthetic",
    "load_dataset",
    "named_rng",
    "resample_uniform",
    "save_dataset",
    "segment_stream",
    "select_joints",
    "select_low_motion_frames",
    "spatial_augment",
    "split_adaptation",
    "split_cross_subject",
    "train",
    "__version__",
]
