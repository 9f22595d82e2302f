"""Multi-view objective, numerical box refinement and pseudo-label filtering.

The refinement objective combines a geometric point-fit term with the
multi-view 2D consistency loss: every frame that annotated the object
contributes 1 - GIoU between the box's projection and the annotated 2D
box, and the per-object mean keeps instances visible in many frames from
dominating.  A derivative-free simplex search minimizes the weighted sum;
the objective is piecewise smooth (min/max and clipping everywhere), so
no gradients are assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .clustering import aggregate_static, dbscan, quality_gate, select_dominant_cluster
from .coarse import fit_coarse_box, verify_geometry
from .config import PipelineConfig
from .errors import BoxliftError
from .extraction import classify_motion, track_centroids
from .geometry import Box3D, CameraModel, giou_2d, project_box3d
from .scene import ObjectTrack

# 1 - GIoU is bounded by 2; an absent projection is charged the supremum so
# the optimizer sees a finite, stable penalty for leaving every frustum.
MISSING_PROJECTION_PENALTY = 2.0


@dataclass(frozen=True)
class ObjectiveWeights:
    lambda_2d: float = 0.5
    mu_fit: float = 1.0

    def __post_init__(self):
        if self.lambda_2d < 0 or self.mu_fit < 0:
            raise ValueError("weights must be non-negative")


def l2d_multiview(
    box: Box3D,
    track: ObjectTrack,
    cameras: dict[int, CameraModel],
    z_near: float = 1e-3,
) -> float:
    """Mean over the track's views of (1 - GIoU(projected box, annotated box))."""
    terms = []
    for fid in track.frame_ids:
        gt = track.observations[fid].annotation.box
        pred = project_box3d(cameras[fid], box, z_near=z_near)
        if pred is None:
            terms.append(MISSING_PROJECTION_PENALTY)
        else:
            terms.append(1.0 - giou_2d(pred, gt))
    return float(sum(terms) / len(terms))


def l_fit(box: Box3D, points) -> float:
    """Geometric fit of points to a box, 0 when points fill the box exactly.

    Outside term: mean distance of points past the box surface, over the
    box diagonal.  Slack term: mean relative shortfall of the observed
    extent along each box axis, penalizing boxes larger than their
    evidence.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("l_fit needs at least one point")
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    d = pts - box.center
    local = np.empty_like(d)
    local[:, 0] = c * d[:, 0] + s * d[:, 1]
    local[:, 1] = -s * d[:, 0] + c * d[:, 1]
    local[:, 2] = d[:, 2]
    half = 0.5 * np.array([box.l, box.w, box.h])
    overshoot = np.maximum(np.abs(local) - half, 0.0)
    outside = np.sqrt((overshoot**2).sum(axis=1)).mean() / box.diagonal
    observed = local.max(axis=0) - local.min(axis=0)
    extents = np.array([box.l, box.w, box.h])
    slack = (np.maximum(extents - observed, 0.0) / extents).mean()
    return float(outside + slack)


def objective_value(
    box: Box3D,
    track: ObjectTrack,
    points,
    cameras: dict[int, CameraModel],
    weights: ObjectiveWeights = ObjectiveWeights(),
    z_near: float = 1e-3,
) -> float:
    """Weighted refinement objective; either term is skipped at weight 0."""
    total = 0.0
    if weights.mu_fit > 0:
        total += weights.mu_fit * l_fit(box, points)
    if weights.lambda_2d > 0:
        total += weights.lambda_2d * l2d_multiview(box, track, cameras, z_near=z_near)
    return total


@dataclass
class RefineTrace:
    n_evals: int
    j_init: float | None
    j_final: float | None
    improvements: list[tuple[int, float]] = field(default_factory=list)


class _BudgetExhausted(Exception):
    pass


def _vec_to_box(x: np.ndarray, extent_floor: float) -> Box3D:
    return Box3D(
        float(x[0]),
        float(x[1]),
        float(x[2]),
        max(float(x[3]), extent_floor),
        max(float(x[4]), extent_floor),
        max(float(x[5]), extent_floor),
        float(x[6]),
    )


def _initial_simplex(x0: np.ndarray) -> np.ndarray:
    # Documented steps: 0.25 m translation, 10% of each extent, 5 deg yaw.
    steps = np.array(
        [0.25, 0.25, 0.25, 0.1 * x0[3], 0.1 * x0[4], 0.1 * x0[5], math.radians(5.0)]
    )
    simplex = np.tile(x0, (8, 1))
    for k in range(7):
        simplex[k + 1, k] += steps[k]
    return simplex


def refine_box(
    init: Box3D,
    track: ObjectTrack,
    points,
    cameras: dict[int, CameraModel],
    weights: ObjectiveWeights = ObjectiveWeights(),
    budget: int = 2000,
    extent_floor: float = 0.05,
    z_near: float = 1e-3,
) -> tuple[Box3D, RefineTrace]:
    """Minimize the refinement objective with a bounded evaluation budget.

    Nelder-Mead from the documented initial simplex, restarted once from
    the best point found with the budget's second half.  Extents are
    clamped to ``extent_floor`` during the search.  The best evaluated box
    is returned, so the result never scores worse than ``init``; a budget
    of zero returns ``init`` untouched.  Deterministic.
    """
    if budget <= 0:
        return init, RefineTrace(0, None, None)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    evals = 0
    limit = 0
    best_x: np.ndarray | None = None
    best_j = math.inf
    trace = RefineTrace(0, None, None)

    def objective(x: np.ndarray) -> float:
        nonlocal evals, best_x, best_j
        if evals >= limit:
            raise _BudgetExhausted
        evals += 1
        j = objective_value(_vec_to_box(x, extent_floor), track, pts, cameras, weights, z_near)
        if j < best_j:
            best_j = j
            best_x = np.array(x, dtype=float)
            trace.improvements.append((evals, j))
        return j

    x0 = init.as_array()
    limit = max(1, budget // 2)
    trace.j_init = objective(x0)
    opts = {"maxiter": 10 * budget, "maxfev": 10 * budget, "xatol": 0.0, "fatol": 0.0}
    try:
        minimize(objective, x0, method="Nelder-Mead",
                 options=dict(opts, initial_simplex=_initial_simplex(x0)))
    except _BudgetExhausted:
        pass
    limit = budget
    restart = np.array(best_x, dtype=float)
    try:
        minimize(objective, restart, method="Nelder-Mead",
                 options=dict(opts, initial_simplex=_initial_simplex(restart)))
    except _BudgetExhausted:
        pass
    trace.n_evals = evals
    trace.j_final = best_j
    return _vec_to_box(best_x, extent_floor), trace


# ---------------------------------------------------------------------------
# pseudo-label filtering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterThresholds:
    """Per-class confidence gates; unknown classes use ``default`` and flag it."""

    per_class: dict = field(default_factory=lambda: {"Car": 0.5, "Pedestrian": 0.4})
    default: float = 0.5

    def __post_init__(self):
        for cls, tau in self.per_class.items():
            if not 0.0 <= tau <= 1.0:
                raise ValueError(f"threshold for {cls!r} outside [0, 1]")
        if not 0.0 <= self.default <= 1.0:
            raise ValueError("default threshold outside [0, 1]")


@dataclass(frozen=True)
class FilterVerdict:
    keep: bool
    reason: str | None = None          # "class" | "confidence" when dropped
    used_default_threshold: bool = False


def filter_pseudo_label(
    predicted_class: str,
    annotation_class: str,
    confidence: float,
    thresholds: FilterThresholds,
) -> FilterVerdict:
    """Drop on class mismatch, then on confidence below the class gate."""
    if predicted_class != annotation_class:
        return FilterVerdict(False, "class")
    used_default = predicted_class not in thresholds.per_class
    tau = thresholds.per_class.get(predicted_class, thresholds.default)
    if confidence < tau:
        return FilterVerdict(False, "confidence", used_default)
    return FilterVerdict(True, None, used_default)


# ---------------------------------------------------------------------------
# per-track pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QualityRecord:
    n_points: int
    n_views: int
    hull_iou: float | None
    l2d: float | None
    fit: float | None


@dataclass(frozen=True)
class PseudoLabel:
    track_id: str
    class_label: str
    box: Box3D
    source: str                        # "coarse" | "refined"
    quality: QualityRecord
    kept: bool
    drop_reason: str | None = None
    confidence: float | None = None
    anchor_frame_id: int | None = None # frame whose pose the box was fitted at

    def __post_init__(self):
        if not self.kept and self.drop_reason is None:
            raise ValueError("dropped label must carry a drop_reason")


# Emitted when a track yields no usable geometry at all; kept is always False.
_SENTINEL_BOX = Box3D(0.0, 0.0, 0.0, 0.05, 0.05, 0.05, 0.0)


def _dropped(track, reason, box=None, quality=None, anchor=None, source="coarse"):
    return PseudoLabel(
        track_id=track.track_id,
        class_label=track.class_label,
        box=box or _SENTINEL_BOX,
        source=source,
        quality=quality or QualityRecord(0, track.n_views_with_points, None, None, None),
        kept=False,
        drop_reason=reason,
        anchor_frame_id=anchor,
    )


def annotate_track(
    track: ObjectTrack,
    cameras: dict[int, CameraModel],
    config: PipelineConfig | None = None,
) -> PseudoLabel:
    """Run the full per-track pipeline and emit one pseudo-label.

    Static tracks: aggregate across frames, clean with DBSCAN, gate on
    cluster size and view count, fit, verify, then refine against every
    view's 2D annotation.  Moving tracks: fit on the single densest view
    and refine against that view only; the object moves between frames, so
    one world-frame box cannot satisfy other timestamps' annotations and
    including them would drag the box off the anchor frame.  Every failure
    path emits a kept=False label whose drop_reason names the stage.
    """
    cfg = config or PipelineConfig()
    centroids = track_centroids(track, cfg.centroid)
    if len(centroids) == 0:
        return _dropped(track, "empty")
    verdict = classify_motion(centroids, cfg.tau_static)

    hull_iou = None
    anchor = track.frame_ids[0]
    loss_track = track
    if verdict.is_static:
        inst = aggregate_static(track)
        labels = dbscan(inst.points_agg, cfg.dbscan_eps, cfg.dbscan_min_pts)
        try:
            cluster = select_dominant_cluster(inst, labels)
        except BoxliftError:
            return _dropped(track, "clustering")
        fit_points = inst.points_agg[cluster.indices]
        n_points = cluster.size
        quality_stub = QualityRecord(n_points, inst.n_views, None, None, None)
        gate = quality_gate(cluster, inst, cfg.min_cluster_points, cfg.min_views)
        if not gate.passed:
            return _dropped(track, gate.reason, quality=quality_stub)
        try:
            box, clamped = fit_coarse_box(fit_points, cfg.extent_floor)
            result = verify_geometry(
                box, fit_points[:, :2], cfg.tau_iou, cfg.hull_metric, clamped
            )
        except BoxliftError:
            return _dropped(track, "degenerate", quality=quality_stub)
        hull_iou = result.hull_iou
        if not result.verified:
            return _dropped(
                track,
                "verification",
                box=box,
                quality=QualityRecord(n_points, inst.n_views, hull_iou, None, None),
                anchor=anchor,
            )
        n_views = inst.n_views
    else:
        densest = max(
            track.frame_ids, key=lambda fid: (len(track.observations[fid].points), -fid)
        )
        fit_points = track.observations[densest].points
        anchor = densest
        n_points = len(fit_points)
        n_views = track.n_views_with_points
        try:
            box, clamped = fit_coarse_box(fit_points, cfg.extent_floor)
            # Recorded for diagnostics; moving fits are single-view and are
            # not gated on shape consistency.
            hull_iou = verify_geometry(
                box, fit_points[:, :2], cfg.tau_iou, cfg.hull_metric, clamped
            ).hull_iou
        except BoxliftError:
            return _dropped(track, "degenerate",
                            quality=QualityRecord(n_points, n_views, None, None, None))
        loss_track = ObjectTrack(
            track.track_id, track.class_label, {densest: track.observations[densest]},
            gt_box3d_per_frame=track.gt_box3d_per_frame,
        )

    weights = ObjectiveWeights(cfg.lambda_2d, cfg.mu_fit)
    source = "coarse"
    if cfg.refine:
        box, _ = refine_box(
            box, loss_track, fit_points, cameras, weights,
            budget=cfg.refine_budget, extent_floor=cfg.extent_floor, z_near=cfg.z_near,
        )
        source = "refined"

    final_l2d = l2d_multiview(box, loss_track, cameras, z_near=cfg.z_near)
    final_fit = l_fit(box, fit_points)
    j_final = cfg.mu_fit * final_fit + cfg.lambda_2d * final_l2d
    confidence = math.exp(-j_final)
    quality = QualityRecord(n_points, n_views, hull_iou, final_l2d, final_fit)

    # No classifier runs here, so the predicted class is the annotated one;
    # the class check can only fire for callers that pass a real prediction.
    thresholds = FilterThresholds(dict(cfg.tau_conf), cfg.tau_conf_default)
    decision = filter_pseudo_label(track.class_label, track.class_label, confidence, thresholds)
    return PseudoLabel(
        track_id=track.track_id,
        class_label=track.class_label,
        box=box,
        source=source,
        quality=quality,
        kept=decision.keep,
        drop_reason=decision.reason,
        confidence=confidence,
        anchor_frame_id=anchor,
    )
