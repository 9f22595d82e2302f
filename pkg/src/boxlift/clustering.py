"""Temporal aggregation, DBSCAN cleaning and the quality gate.

Aggregation unions the per-frame extracted points of a static track into
one world-frame cloud; DBSCAN separates the object body from stray
background points that leaked through the 2D annotation, and the largest
cluster is kept for box fitting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyAggregate, NoClusterError
from .scene import ObjectTrack

NOISE = -1


@dataclass(eq=False)
class AggregatedInstance:
    track_id: str
    class_label: str
    points_agg: np.ndarray                 # (n, 3) world frame
    point_frame_ids: np.ndarray            # (n,) source frame per point
    point_indices: np.ndarray              # (n,) index within the source frame cloud
    per_view_points: dict[int, np.ndarray] # frame_id -> that frame's points
    n_views: int                           # frames with a non-empty extraction


def aggregate_static(track: ObjectTrack) -> AggregatedInstance:
    """Concatenate per-frame extracted points, keeping per-point provenance."""
    chunks, fids, idxs = [], [], []
    per_view: dict[int, np.ndarray] = {}
    n_views = 0
    for fid in track.frame_ids:
        obs = track.observations[fid]
        if len(obs.points) == 0:
            continue
        n_views += 1
        chunks.append(obs.points)
        fids.append(np.full(len(obs.points), fid, dtype=np.int64))
        idxs.append(np.asarray(obs.indices, dtype=np.int64))
        per_view[fid] = obs.points
    if not chunks:
        raise EmptyAggregate(f"track {track.track_id!r} has no extracted points")
    return AggregatedInstance(
        track_id=track.track_id,
        class_label=track.class_label,
        points_agg=np.concatenate(chunks),
        point_frame_ids=np.concatenate(fids),
        point_indices=np.concatenate(idxs),
        per_view_points=per_view,
        n_views=n_views,
    )


def _grid_neighbors(points: np.ndarray, eps: float) -> list[np.ndarray]:
    """Per-point index arrays of eps-neighbors (self included), ascending.

    Uses a uniform voxel grid of cell size eps so each query only scans
    the 27 surrounding cells.
    """
    cells = np.floor(points / eps).astype(np.int64)
    grid: dict[tuple[int, int, int], list[int]] = {}
    for i, key in enumerate(map(tuple, cells)):
        grid.setdefault(key, []).append(i)
    offsets = [
        (dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
    ]
    eps2 = eps * eps
    out: list[np.ndarray] = []
    for i in range(len(points)):
        cx, cy, cz = cells[i]
        cand: list[int] = []
        for dx, dy, dz in offsets:
            cand.extend(grid.get((cx + dx, cy + dy, cz + dz), ()))
        cand_arr = np.array(cand, dtype=np.int64)
        d2 = ((points[cand_arr] - points[i]) ** 2).sum(axis=1)
        near = cand_arr[d2 <= eps2]
        near.sort()
        out.append(near)
    return out


def dbscan(points, eps: float, min_pts: int) -> np.ndarray:
    """Euclidean DBSCAN; returns per-point cluster labels, noise = -1.

    Labeling is deterministic for a fixed input order: cluster ids are
    assigned in order of each cluster's first core point, and a border
    point joins the cluster of its lowest-index core neighbor.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels
    neighbors = _grid_neighbors(pts, eps)
    core = np.array([len(nb) >= min_pts for nb in neighbors])
    cluster = 0
    for start in range(n):
        if not core[start] or labels[start] != NOISE:
            continue
        labels[start] = cluster
        queue = [start]
        while queue:
            j = queue.pop()
            for nb in neighbors[j]:
                if core[nb] and labels[nb] == NOISE:
                    labels[nb] = cluster
                    queue.append(nb)
        cluster += 1
    for i in range(n):
        if core[i] or labels[i] != NOISE:
            continue
        for nb in neighbors[i]:
            if core[nb]:
                labels[i] = labels[nb]
                break
    return labels


@dataclass(frozen=True)
class CleanCluster:
    indices: np.ndarray    # ascending indices into points_agg
    centroid: np.ndarray

    @property
    def size(self) -> int:
        return len(self.indices)


def select_dominant_cluster(inst: AggregatedInstance, labels: np.ndarray) -> CleanCluster:
    """Largest cluster; ties resolved toward the aggregate median, then id."""
    labels = np.asarray(labels)
    ids = np.unique(labels[labels != NOISE])
    if len(ids) == 0:
        raise NoClusterError(f"track {inst.track_id!r}: all points labelled noise")
    sizes = {int(cid): int((labels == cid).sum()) for cid in ids}
    best_size = max(sizes.values())
    tied = [cid for cid, s in sizes.items() if s == best_size]
    if len(tied) > 1:
        median = np.median(inst.points_agg, axis=0)
        dist = {
            cid: float(np.linalg.norm(inst.points_agg[labels == cid].mean(axis=0) - median))
            for cid in tied
        }
        best_dist = min(dist.values())
        tied = [cid for cid in tied if dist[cid] == best_dist]
    winner = min(tied)
    indices = np.flatnonzero(labels == winner)
    return CleanCluster(indices=indices, centroid=inst.points_agg[indices].mean(axis=0))


@dataclass(frozen=True)
class GateResult:
    passed: bool
    reason: str | None = None


def quality_gate(
    cluster: CleanCluster,
    inst: AggregatedInstance,
    min_points: int = 10,
    min_views: int = 2,
) -> GateResult:
    """Reject instances whose clean cluster is too sparse or too few-viewed."""
    if cluster.size < min_points:
        return GateResult(False, "sparse")
    if inst.n_views < min_views:
        return GateResult(False, "views")
    return GateResult(True)
