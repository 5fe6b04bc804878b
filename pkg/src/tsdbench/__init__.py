"""Challenge-condition synthesis, detection scoring and residual spectral analysis."""

__version__ = "0.1.0"

from .annotations import (
    Annotation,
    BoundingBox,
    Detection,
    SignType,
    enumerate_eval_cells,
    parse_annotations,
    parse_detections,
    split_dataset,
    write_annotations,
)
from .challenges import (
    ChallengeComposer,
    ChallengeSpec,
    ChallengeTransformer,
    ChallengeType,
    apply_challenge,
    compose_challenges,
    read_manifest,
    synth_composed,
    synth_grid,
)
from .exceptions import (
    AnnotationFormatError,
    FrameIOError,
    GridError,
    UndefinedCorrelationError,
)
from .imaging import FrameSequence, frame_diff, load_frame, load_sequence, save_frame, save_sequence, to_luma
from .metrics import (
    ConfusionCounts,
    MetricsRecord,
    aggregate_by_level,
    aggregate_by_type,
    compute_metrics,
    degradation,
    degradation_table,
    fbeta,
    iou,
    match_detections,
)
from .spectral import ResidualSpectrum, dft2, log_magnitude_spectrum, mean_magnitude, spectrum_pipeline
from .stats import correlate_performance, spearman

__all__ = [
    "Annotation",
    "AnnotationFormatError",
    "BoundingBox",
    "ChallengeComposer",
    "ChallengeSpec",
    "ChallengeTransformer",
    "ChallengeType",
    "ConfusionCounts",
    "Detection",
    "FrameIOError",
    "FrameSequence",
    "GridError",
    "MetricsRecord",
    "ResidualSpectrum",
    "SignType",
    "UndefinedCorrelationError",
    "aggregate_by_level",
    "aggregate_by_type",
    "apply_challenge",
    "compose_challenges",
    "compute_metrics",
    "correlate_performance",
    "degradation",
    "degradation_table",
    "dft2",
    "enumerate_eval_cells",
    "fbeta",
    "frame_diff",
    "iou",
    "load_frame",
    "load_sequence",
    "log_magnitude_spectrum",
    "match_detections",
    "mean_magnitude",
    "parse_annotations",
    "parse_detections",
    "read_manifest",
    "save_frame",
    "save_sequence",
    "spearman",
    "spectrum_pipeline",
    "split_dataset",
    "synth_composed",
    "synth_grid",
    "to_luma",
    "write_annotations",
]
