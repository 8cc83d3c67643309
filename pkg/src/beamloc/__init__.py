"""Weakly supervised object localization by classifier-guided beam search."""

from .errors import (
    BeamlocError,
    BoxBoundsError,
    BridgeDimensionError,
    BridgeError,
    BridgeProtocolError,
    BridgeRemoteError,
    BridgeTimeoutError,
    DimensionError,
    ProviderError,
)
from .evaluation import (
    DetectionRecord,
    GroundTruth,
    PRCurve,
    Response,
    detection_metric,
    iou,
    point_metric,
)
from .heatmap import (
    Detection,
    HeatMap,
    PointResponse,
    accumulate,
    extract_detections,
    point_response,
    write_pgm,
)
from .localizer import BeamLocalizer
from .providers import FeatureProvider, MeanActivationHead, Scene, SyntheticProvider
from .scoring import (
    CooccurrenceRescorer,
    LinearSoftmaxHead,
    ScoringHead,
    build_cooccurrence,
    rescore,
    softmax,
)
from .search import (
    BeamConfig,
    SearchNode,
    beam_localize,
    best_node,
    children,
    exhaustive_oracle,
    flatten_survivors,
    greedy_localize,
)
from .tensors import (
    FeatureMap,
    GridBox,
    PixelRect,
    backproject,
    compose_rect,
    load_fmap1,
    read_fmap1,
    save_fmap1,
    truncate_and_resize,
    write_fmap1,
)

__version__ = "0.1.0"

__all__ = [
    "BeamConfig",
    "BeamLocalizer",
    "BeamlocError",
    "BoxBoundsError",
    "BridgeDimensionError",
    "BridgeError",
    "BridgeProtocolError",
    "BridgeRemoteError",
    "BridgeTimeoutError",
    "CooccurrenceRescorer",
    "Detection",
    "DetectionRecord",
    "DimensionError",
    "FeatureMap",
    "FeatureProvider",
    "GridBox",
    "GroundTruth",
    "HeatMap",
    "LinearSoftmaxHead",
    "MeanActivationHead",
    "PRCurve",
    "PixelRect",
    "PointResponse",
    "ProviderError",
    "Response",
    "Scene",
    "ScoringHead",
    "SearchNode",
    "SyntheticProvider",
    "accumulate",
    "backproject",
    "beam_localize",
    "best_node",
    "build_cooccurrence",
    "children",
    "compose_rect",
    "detection_metric",
    "exhaustive_oracle",
    "extract_detections",
    "flatten_survivors",
    "greedy_localize",
    "iou",
    "load_fmap1",
    "point_metric",
    "point_response",
    "read_fmap1",
    "rescore",
    "save_fmap1",
    "softmax",
    "truncate_and_resize",
    "write_fmap1",
    "write_pgm",
]
