"""High-level estimator tying search, pooling, and detection together.

``BeamLocalizer`` follows the sklearn estimator conventions: constructor
arguments are stored untouched (so ``get_params``/``set_params``/``clone``
work), ``fit`` learns the label co-occurrence prior, and ``predict`` maps
image references to detections.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .heatmap import Detection, HeatMap, PointResponse, accumulate, extract_detections
from .heatmap import point_response as heat_point_response
from .scoring import build_cooccurrence
from .search import BeamConfig, SearchNode, beam_localize, flatten_survivors


class BeamLocalizer(BaseEstimator):
    """Searches one image per class and reduces survivors to predictions.

    Parameters
    ----------
    provider : FeatureProvider
        Supplies feature maps for pixel crops.
    head : ScoringHead
        Scores feature maps into class probabilities.
    beam_width, beam_depth : int
        Search effort; the defaults match the reference configuration.
    alpha : float
        Pairwise weight when rescoring with a co-occurrence prior.
    use_rescoring : bool
        Rank candidates by rescored class scores when a prior is available.
    include_root_heat : bool
        Keep the full-image root box when pooling heat maps.
    """

    def __init__(
        self,
        provider=None,
        head=None,
        beam_width: int = 8,
        beam_depth: int = 10,
        alpha: float = 0.5,
        use_rescoring: bool = True,
        include_root_heat: bool = True,
    ):
        self.provider = provider
        self.head = head
        self.beam_width = beam_width
        self.beam_depth = beam_depth
        self.alpha = alpha
        self.use_rescoring = use_rescoring
        self.include_root_heat = include_root_heat

    def fit(self, label_sets, y=None):
        """Learn the co-occurrence prior from per-image label sets."""
        self.cooccurrence_ = build_cooccurrence(
            [list(labels) for labels in label_sets], self.head.class_count
        )
        return self

    def _config(self, class_id: int) -> BeamConfig:
        return BeamConfig(
            target_class=class_id,
            beam_width=self.beam_width,
            beam_depth=self.beam_depth,
            use_rescoring=self.use_rescoring,
            alpha=self.alpha,
            cooccurrence=getattr(self, "cooccurrence_", None),
        )

    def localize(self, image_ref, image_w: int, image_h: int, class_id: int):
        """Per-level survivors of one beam run."""
        return beam_localize(
            self.provider, self.head, image_ref, image_w, image_h, self._config(class_id)
        )

    def heat_map(self, image_ref, image_w: int, image_h: int, class_id: int) -> HeatMap:
        levels = self.localize(image_ref, image_w, image_h, class_id)
        return self.survivors_to_heat(flatten_survivors(levels), image_w, image_h, class_id)

    def survivors_to_heat(
        self, survivors: list[SearchNode], image_w: int, image_h: int, class_id: int
    ) -> HeatMap:
        return accumulate(
            survivors, image_w, image_h, class_id, include_root=self.include_root_heat
        )

    def point_response(
        self, image_ref, image_w: int, image_h: int, class_id: int
    ) -> PointResponse:
        return heat_point_response(self.heat_map(image_ref, image_w, image_h, class_id))

    def detect(
        self, image_ref, image_w: int, image_h: int, class_id: int, theta: float
    ) -> list[Detection]:
        return extract_detections(self.heat_map(image_ref, image_w, image_h, class_id), theta)

    def predict(self, X, thresholds=None) -> list[list[Detection]]:
        """Detections for a batch of (image_ref, image_w, image_h, class_id) rows."""
        thresholds = thresholds or {}
        out = []
        for image_ref, image_w, image_h, class_id in X:
            theta = float(thresholds.get(class_id, 0.0))
            out.append(self.detect(image_ref, image_w, image_h, class_id, theta))
        return out
