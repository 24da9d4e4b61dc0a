"""Camera-style unification for person re-identification.

Train one style-transfer model per camera mapping its images into a shared
multi-camera style, use the unified images to augment re-ID training and to
normalize query/gallery inputs at test time, and evaluate with CMC/mAP.
"""

from .data import (
    DISTRACTOR_ID,
    AugmentConfig,
    DatasetIndex,
    PersonImage,
    StyleStats,
    SyntheticStyleParams,
    apply_camera_style,
    augment,
    default_style_params,
    load_dataset,
    make_synthetic_dataset,
    parse_reid_filename,
    style_statistics,
    write_dataset,
)
from .errors import (
    ConfigError,
    DatasetError,
    EvaluationError,
    FilenameParseError,
    MissingArtifactError,
    UnityStyleError,
    UnsupportedOperationError,
)
from .evaluation import (
    EvalProtocol,
    EvalReport,
    average_precision,
    camera_accuracy_matrix,
    cmc,
    evaluate,
    pairwise_distances,
)
from .rerank import rerank
from .config import RunConfig, resolve_dataset

__version__ = "0.1.0"

__all__ = [
    "DISTRACTOR_ID",
    "AugmentConfig",
    "DatasetIndex",
    "PersonImage",
    "StyleStats",
    "SyntheticStyleParams",
    "apply_camera_style",
    "augment",
    "default_style_params",
    "load_dataset",
    "make_synthetic_dataset",
    "parse_reid_filename",
    "style_statistics",
    "write_dataset",
    "ConfigError",
    "DatasetError",
    "EvaluationError",
    "FilenameParseError",
    "MissingArtifactError",
    "UnityStyleError",
    "UnsupportedOperationError",
    "EvalProtocol",
    "EvalReport",
    "average_precision",
    "camera_accuracy_matrix",
    "cmc",
    "evaluate",
    "pairwise_distances",
    "rerank",
    "RunConfig",
    "resolve_dataset",
    "__version__",
]
