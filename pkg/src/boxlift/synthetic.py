"""Synthetic driving-scene generator used as the ground-truth oracle.

Objects are boxes on the ground plane observed by an ego vehicle moving
along a configured trajectory.  Per frame, LiDAR-style points are sampled
uniformly on the box faces whose outward normal faces the sensor
(back-face culling), jittered with Gaussian noise, and stored in the ego
frame.  2D annotations are produced by projecting each ground-truth box
through the exact projection code the pipeline uses, so annotation boxes
match ``project_box3d`` of the ground-truth box bit for bit.  Instance
masks are the rasterized silhouette of the projected box corners.  A
configurable fraction of "bleed" outliers is pushed along the sensor ray
past the surface to mimic camera/LiDAR misalignment noise.

Generation is deterministic: every random draw comes from one seeded
generator in a fixed traversal order (object setup, then frames x objects
x faces, then bleed, then background clutter).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateHull
from .geometry import Box3D, Pose, convex_hull, project_box3d, project_box_silhouette
from .masks import encode_mask, rasterize_convex_polygon
from .scene import Annotation2D, CameraRigEntry, Frame, GtSpan, GtTrack, Scene

# Camera axes in the ego frame: +z optical axis forward (+x ego), +x right
# (-y ego), +y down (-z ego).
_CAM_BASE = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


@dataclass(frozen=True)
class CameraSpec:
    camera_id: str
    fx: float = 500.0
    fy: float = 500.0
    cx: float = 400.0
    cy: float = 225.0
    width: int = 800
    height: int = 450
    mount_yaw_deg: float = 0.0
    mount_offset: tuple = (0.0, 0.0, 0.0)

    def rig_entry(self) -> CameraRigEntry:
        yaw = math.radians(self.mount_yaw_deg)
        c, s = math.cos(yaw), math.sin(yaw)
        rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return CameraRigEntry(
            camera_id=self.camera_id,
            fx=self.fx,
            fy=self.fy,
            cx=self.cx,
            cy=self.cy,
            width=self.width,
            height=self.height,
            ego_from_camera=Pose.from_matrix(rz @ _CAM_BASE, np.asarray(self.mount_offset, float)),
        )


@dataclass(frozen=True)
class EgoSpec:
    start: tuple = (0.0, 0.0, 1.8)
    velocity: tuple = (4.0, 0.0, 0.0)   # m/s
    yaw0: float = 0.0
    yaw_rate: float = 0.0               # rad/s

    def pose_at(self, t: float) -> Pose:
        pos = np.asarray(self.start, float) + np.asarray(self.velocity, float) * t
        return Pose.from_yaw(self.yaw0 + self.yaw_rate * t, pos)


@dataclass(frozen=True)
class ObjectClassSpec:
    class_label: str
    count: int
    length_range: tuple
    width_range: tuple
    height_range: tuple
    speed_range: tuple = (1.0, 4.0)     # moving objects only, m/s
    static: bool | None = None          # None: sample from static_fraction
    density: float = 8.0                # surface points per m^2 per frame
    sigma: float = 0.02                 # sensor noise std, meters

    def __post_init__(self):
        if self.count < 0:
            raise ConfigError("object count must be >= 0")
        if self.density <= 0:
            raise ConfigError("density must be positive")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        for name in ("length_range", "width_range", "height_range", "speed_range"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi):
                raise ConfigError(f"{name} must satisfy 0 <= lo <= hi")


@dataclass(frozen=True)
class PlacementSpec:
    x_range: tuple = (8.0, 40.0)
    y_range: tuple = (-10.0, 10.0)
    min_separation: float = 6.0         # BEV meters between object centers
    # Silhouettes of distinct objects must stay this far apart in bearing
    # from every ego position, so one object's mask never swallows another
    # object's points (inter-object occlusion is not modelled).
    min_angular_margin_deg: float = 3.0
    min_sensor_distance: float = 3.0    # BEV meters from ego to any object edge


@dataclass(frozen=True)
class SceneConfig:
    scene_id: str = "synthetic"
    n_frames: int = 10
    dt: float = 0.5                     # seconds between frames
    seed: int = 0
    cameras: tuple = (CameraSpec("cam_front"),)
    ego: EgoSpec = EgoSpec()
    objects: tuple = ()
    static_fraction: float = 0.74
    bleed_fraction: float = 0.02        # share of points turned into outliers
    bleed_offset_range: tuple = (0.0, 0.5)  # meters past the surface, along the ray
    placement: PlacementSpec = PlacementSpec()
    emit_masks: bool = True
    mask_confidence: float = 1.0
    n_background: int = 0               # ground-plane clutter points per frame

    def __post_init__(self):
        if self.n_frames < 1:
            raise ConfigError("n_frames must be >= 1")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if not 0.0 <= self.static_fraction <= 1.0:
            raise ConfigError("static_fraction must be in [0, 1]")
        if not 0.0 <= self.bleed_fraction <= 1.0:
            raise ConfigError("bleed_fraction must be in [0, 1]")
        lo, hi = self.bleed_offset_range
        if not 0 <= lo <= hi:
            raise ConfigError("bleed_offset_range must satisfy 0 <= lo <= hi")
        if not self.cameras:
            raise ConfigError("at least one camera is required")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["cameras"] = [dataclasses.asdict(c) for c in self.cameras]
        d["ego"] = dataclasses.asdict(self.ego)
        d["objects"] = [dataclasses.asdict(o) for o in self.objects]
        d["placement"] = dataclasses.asdict(self.placement)
        return _listify(d)

    @staticmethod
    def from_dict(d: dict) -> "SceneConfig":
        known = {f.name for f in dataclasses.fields(SceneConfig)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scene config keys: {sorted(unknown)}")
        kw = dict(d)
        try:
            if "cameras" in kw:
                kw["cameras"] = tuple(CameraSpec(**_tuplify(c)) for c in kw["cameras"])
            if "ego" in kw:
                kw["ego"] = EgoSpec(**_tuplify(kw["ego"]))
            if "objects" in kw:
                kw["objects"] = tuple(ObjectClassSpec(**_tuplify(o)) for o in kw["objects"])
            if "placement" in kw:
                kw["placement"] = PlacementSpec(**_tuplify(kw["placement"]))
            if "bleed_offset_range" in kw:
                kw["bleed_offset_range"] = tuple(kw["bleed_offset_range"])
            return SceneConfig(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @staticmethod
    def from_json_file(path) -> "SceneConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return SceneConfig.from_dict(data)


def _listify(value):
    if isinstance(value, tuple):
        return [_listify(v) for v in value]
    if isinstance(value, list):
        return [_listify(v) for v in value]
    if isinstance(value, dict):
        return {k: _listify(v) for k, v in value.items()}
    return value


def _tuplify(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def default_scene_config() -> SceneConfig:
    """A small mixed-class scene usable as a starting point."""
    return SceneConfig(
        objects=(
            ObjectClassSpec("Car", 5, (4.0, 4.8), (1.7, 2.0), (1.4, 1.7), (2.0, 6.0)),
            ObjectClassSpec("Pedestrian", 3, (0.5, 0.7), (0.5, 0.7), (1.6, 1.8), (0.5, 1.5),
                            density=40.0),
            ObjectClassSpec("Bicycle", 2, (1.6, 1.9), (0.5, 0.7), (1.0, 1.3), (1.0, 4.0),
                            density=25.0),
        ),
    )


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


@dataclass
class _ObjectState:
    track_id: str
    spec: ObjectClassSpec
    size: tuple      # (l, w, h)
    yaw: float
    center0: np.ndarray
    velocity: np.ndarray
    static: bool

    def box_at(self, t: float) -> Box3D:
        c = self.center0 + self.velocity * t
        l, w, h = self.size
        return Box3D(float(c[0]), float(c[1]), float(c[2]), l, w, h, self.yaw)


def _uniform(rng: np.random.Generator, rng_pair) -> float:
    lo, hi = rng_pair
    return float(lo) if hi == lo else float(rng.uniform(lo, hi))


def _placement_ok(
    cfg: SceneConfig,
    times: np.ndarray,
    sensors: np.ndarray,
    cand0: np.ndarray,
    cand_vel: np.ndarray,
    cand_radius: float,
    others: list[_ObjectState],
) -> bool:
    margin = math.radians(cfg.placement.min_angular_margin_deg)
    for t, sensor in zip(times, sensors):
        a = cand0[:2] + cand_vel[:2] * t
        da = float(np.linalg.norm(a - sensor))
        if da < cand_radius + cfg.placement.min_sensor_distance:
            return False
        bearing_a = math.atan2(a[1] - sensor[1], a[0] - sensor[0])
        ang_a = math.atan2(cand_radius, da)
        for other in others:
            radius = 0.5 * math.hypot(other.size[0], other.size[1])
            b = other.center0[:2] + other.velocity[:2] * t
            db = float(np.linalg.norm(b - sensor))
            bearing_b = math.atan2(b[1] - sensor[1], b[0] - sensor[0])
            gap = abs(math.remainder(bearing_a - bearing_b, 2.0 * math.pi))
            if gap < ang_a + math.atan2(radius, db) + margin:
                return False
        for other in others:
            b = other.center0[:2] + other.velocity[:2] * t
            if float(np.linalg.norm(a - b)) < cfg.placement.min_separation:
                return False
    return True


def _setup_objects(cfg: SceneConfig, rng: np.random.Generator) -> list[_ObjectState]:
    objects: list[_ObjectState] = []
    times = np.arange(cfg.n_frames) * cfg.dt
    sensors = np.array([cfg.ego.pose_at(t).t[:2] for t in times])
    k = 0
    for spec in cfg.objects:
        for _ in range(spec.count):
            l = _uniform(rng, spec.length_range)
            w = _uniform(rng, spec.width_range)
            h = _uniform(rng, spec.height_range)
            static = spec.static if spec.static is not None else bool(
                rng.random() < cfg.static_fraction
            )
            heading = float(rng.uniform(-math.pi, math.pi))
            if static:
                velocity = np.zeros(3)
            else:
                speed = _uniform(rng, spec.speed_range)
                velocity = speed * np.array([math.cos(heading), math.sin(heading), 0.0])
            radius = 0.5 * math.hypot(l, w)
            pos = None
            for _ in range(500):
                cand = np.array(
                    [
                        rng.uniform(*cfg.placement.x_range),
                        rng.uniform(*cfg.placement.y_range),
                        0.5 * h,
                    ]
                )
                if _placement_ok(cfg, times, sensors, cand, velocity, radius, objects):
                    pos = cand
                    break
            if pos is None:
                pos = cand  # crowded config: accept the last sample
            objects.append(
                _ObjectState(
                    track_id=f"obj-{k:03d}",
                    spec=spec,
                    size=(l, w, h),
                    yaw=heading,
                    center0=pos,
                    velocity=velocity,
                    static=static,
                )
            )
            k += 1
    return objects


# Face f covers axis f // 2, positive side when f % 2 == 1.
_FACE_AXES = [(f // 2, 1 if f % 2 else -1) for f in range(6)]


def _sample_object_points(
    box: Box3D, spec: ObjectClassSpec, sensor: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Sample surface points on sensor-facing faces; returns (points, face ids)."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    half = 0.5 * np.array([box.l, box.w, box.h])
    chunks, faces = [], []
    for f, (axis, sign) in enumerate(_FACE_AXES):
        normal_local = np.zeros(3)
        normal_local[axis] = sign
        normal_world = rot @ normal_local
        face_center = box.center + rot @ (normal_local * half[axis])
        if float(np.dot(sensor - face_center, normal_world)) <= 0.0:
            continue
        others = [a for a in range(3) if a != axis]
        area = 4.0 * half[others[0]] * half[others[1]]
        n = int(rng.poisson(spec.density * area))
        if n == 0:
            continue
        local = np.zeros((n, 3))
        local[:, axis] = sign * half[axis]
        local[:, others[0]] = rng.uniform(-half[others[0]], half[others[0]], n)
        local[:, others[1]] = rng.uniform(-half[others[1]], half[others[1]], n)
        pts = local @ rot.T + box.center
        if spec.sigma > 0:
            pts = pts + rng.normal(0.0, spec.sigma, (n, 3))
        chunks.append(pts)
        faces.append(np.full(n, f, dtype=np.int64))
    if not chunks:
        return np.empty((0, 3)), np.empty(0, dtype=np.int64)
    return np.concatenate(chunks), np.concatenate(faces)


def _ray_box_exit(
    origin: np.ndarray, directions: np.ndarray, box: Box3D, fallback: np.ndarray
) -> np.ndarray:
    """Distance along each ray to where it leaves the box (slab method).

    Rays that miss the box fall back to the given per-ray distance (the
    surface sample the ray passed through).
    """
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    o = (origin - box.center) @ rot
    d = directions @ rot
    half = 0.5 * np.array([box.l, box.w, box.h])
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    t_far = np.nanmin(np.maximum(t1, t2), axis=1)
    return np.where(np.isfinite(t_far) & (t_far > 0), np.maximum(t_far, fallback), fallback)


def _silhouette_mask(camera, box, width, height):
    pts = project_box_silhouette(camera, box)
    if len(pts) < 3:
        return None
    try:
        hull = convex_hull(pts)
    except DegenerateHull:
        return None
    bitmap = rasterize_convex_polygon(hull.vertices, width, height)
    if not bitmap.any():
        return None
    return encode_mask(bitmap)


def generate_scene(cfg: SceneConfig, seed: int | None = None) -> Scene:
    """Generate a scene with hidden ground truth; deterministic per (cfg, seed)."""
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    rig = {spec.camera_id: spec.rig_entry() for spec in cfg.cameras}
    if len(rig) != len(cfg.cameras):
        raise ConfigError("duplicate camera ids")
    objects = _setup_objects(cfg, rng)

    frames: list[Frame] = []
    for i in range(cfg.n_frames):
        t = i * cfg.dt
        ego = cfg.ego.pose_at(t)
        sensor = ego.t
        chunks: list[np.ndarray] = []
        spans: list[GtSpan] = []
        cursor = 0
        boxes_t: dict[str, Box3D] = {}
        for obj in objects:
            box = obj.box_at(t)
            boxes_t[obj.track_id] = box
            pts, faces = _sample_object_points(box, obj.spec, sensor, rng)
            n = len(pts)
            n_bleed = 0
            if n and cfg.bleed_fraction > 0:
                n_bleed = int(rng.binomial(n, cfg.bleed_fraction))
            if n_bleed:
                # Bleed mimics mask pixels that see past the object: the ray
                # continues through the body and lands behind its exit point.
                sel = rng.choice(n, size=n_bleed, replace=False)
                rays = pts[sel] - sensor
                dists = np.linalg.norm(rays, axis=1, keepdims=True)
                rays /= dists
                exit_t = _ray_box_exit(sensor, rays, box, fallback=dists[:, 0])
                off = rng.uniform(*cfg.bleed_offset_range, n_bleed)
                pts = np.concatenate([pts, sensor + rays * (exit_t + off)[:, None]])
                faces = np.concatenate([faces, faces[sel]])
            if len(pts):
                chunks.append(pts)
                spans.append(
                    GtSpan(
                        track_id=obj.track_id,
                        start=cursor,
                        count=len(pts),
                        n_bleed=n_bleed,
                        faces=tuple(int(f) for f in faces),
                    )
                )
                cursor += len(pts)
        if cfg.n_background:
            bg = np.column_stack(
                [
                    rng.uniform(*cfg.placement.x_range, cfg.n_background),
                    rng.uniform(*cfg.placement.y_range, cfg.n_background),
                    rng.normal(0.0, 0.02, cfg.n_background),
                ]
            )
            chunks.append(bg)
        points_world = np.concatenate(chunks) if chunks else np.empty((0, 3))

        annotations: list[Annotation2D] = []
        for obj in objects:
            box = boxes_t[obj.track_id]
            best = None
            for cid in sorted(rig):
                cam_entry = rig[cid]
                cam = _world_camera(cam_entry, ego)
                proj = project_box3d(cam, box)
                if proj is None:
                    continue
                key = (proj.area, cid)
                if best is None or key > best[0]:
                    best = (key, cid, cam, proj)
            if best is None:
                continue
            _, cid, cam, proj = best
            mask = None
            if cfg.emit_masks:
                mask = _silhouette_mask(cam, box, rig[cid].width, rig[cid].height)
            annotations.append(
                Annotation2D(
                    track_id=obj.track_id,
                    class_label=obj.spec.class_label,
                    camera_id=cid,
                    box=proj,
                    mask=mask,
                    mask_confidence=cfg.mask_confidence if mask is not None else None,
                )
            )

        ego_points = ego.inverse().apply(points_world).astype("<f4") if len(points_world) else np.empty((0, 3), dtype="<f4")
        frames.append(
            Frame(
                frame_id=i,
                timestamp=t,
                world_from_ego=ego,
                pointcloud=f"pc/frame_{i:06d}.mvpc",
                annotations=annotations,
                points_ego=ego_points,
                gt_spans=spans,
            )
        )

    gt_tracks = {
        obj.track_id: GtTrack(
            class_label=obj.spec.class_label,
            static=obj.static,
            velocity=tuple(float(v) for v in obj.velocity),
            boxes={i: obj.box_at(i * cfg.dt) for i in range(cfg.n_frames)},
        )
        for obj in objects
    }
    return Scene(
        scene_id=cfg.scene_id,
        cameras=rig,
        frames=frames,
        gt_tracks=gt_tracks,
        generator={"seed": int(seed), "config": cfg.to_dict()},
    )


def _world_camera(entry: CameraRigEntry, world_from_ego: Pose):
    from .geometry import CameraModel

    return CameraModel(
        fx=entry.fx,
        fy=entry.fy,
        cx=entry.cx,
        cy=entry.cy,
        width=entry.width,
        height=entry.height,
        world_from_camera=world_from_ego.compose(entry.ego_from_camera),
    )
