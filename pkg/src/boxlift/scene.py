"""In-memory dataset model: scenes, frames, annotations and object tracks.

Point clouds are stored in the ego frame (as on disk) and transformed to
world coordinates on first access, using each frame's ego pose.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import Box2D, Box3D, CameraModel, Pose
from .masks import Mask


@dataclass(frozen=True)
class Annotation2D:
    track_id: str
    class_label: str
    camera_id: str
    box: Box2D
    mask: Mask | None = None
    mask_confidence: float | None = None


@dataclass(frozen=True)
class GtSpan:
    """Synthetic-only provenance of a contiguous run of frame points.

    The span covers points [start, start + count); the last ``n_bleed`` of
    them are injected outliers.  ``faces`` gives the source box face id
    (axis * 2 + (1 if positive side else 0)) per point.
    """

    track_id: str
    start: int
    count: int
    n_bleed: int
    faces: tuple[int, ...]


@dataclass(frozen=True)
class CameraRigEntry:
    """An ego-mounted camera: intrinsics plus the mount pose."""

    camera_id: str
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    ego_from_camera: Pose


@dataclass(eq=False)
class Frame:
    frame_id: int
    timestamp: float
    world_from_ego: Pose
    pointcloud: str                      # path relative to the scene directory
    annotations: list[Annotation2D]
    points_ego: np.ndarray               # (n, 3) float32, ego frame
    gt_spans: list[GtSpan] | None = None
    _points_world: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_points(self) -> int:
        return len(self.points_ego)

    @property
    def points_world(self) -> np.ndarray:
        if self._points_world is None:
            pts = self.world_from_ego.apply(self.points_ego.astype(np.float64))
            pts.flags.writeable = False
            self._points_world = pts
        return self._points_world


@dataclass(frozen=True)
class GtTrack:
    """Synthetic-only ground truth for one object instance."""

    class_label: str
    static: bool
    velocity: tuple[float, float, float]
    boxes: dict[int, Box3D]              # frame_id -> world-frame box


@dataclass(eq=False)
class Scene:
    scene_id: str
    cameras: dict[str, CameraRigEntry]
    frames: list[Frame]
    gt_tracks: dict[str, GtTrack] | None = None
    generator: dict | None = None        # synthetic provenance (config echo, seed)

    def camera_for(self, frame: Frame, camera_id: str) -> CameraModel:
        """World-posed camera model for one frame of this scene."""
        try:
            rig = self.cameras[camera_id]
        except KeyError:
            raise ConfigError(f"unknown camera id {camera_id!r}") from None
        return CameraModel(
            fx=rig.fx,
            fy=rig.fy,
            cx=rig.cx,
            cy=rig.cy,
            width=rig.width,
            height=rig.height,
            world_from_camera=frame.world_from_ego.compose(rig.ego_from_camera),
        )

    @property
    def seed(self) -> int | None:
        if self.generator is None:
            return None
        return self.generator.get("seed")


@dataclass(frozen=True)
class Observation:
    """One frame's view of a track: the annotation and its extracted points."""

    annotation: Annotation2D
    points: np.ndarray                   # (k, 3) world frame
    indices: np.ndarray                  # (k,) indices into the frame's cloud


@dataclass(eq=False)
class ObjectTrack:
    track_id: str
    class_label: str
    observations: dict[int, Observation]  # frame_id -> observation
    gt_box3d_per_frame: dict[int, Box3D] | None = None

    def __post_init__(self):
        if not self.observations:
            raise ValueError(f"track {self.track_id!r} has no observations")

    @property
    def frame_ids(self) -> list[int]:
        return sorted(self.observations)

    @property
    def n_views_with_points(self) -> int:
        return sum(1 for ob in self.observations.values() if len(ob.points) > 0)
