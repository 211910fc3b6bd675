"""Per-obstacle size, shape and support-surface features."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geom import NormalField, SceneSegmentation, canonicalize
from .pointcloud import PointCloud

SHAPE_MAX = 10.0  # assigned when the quadric fit is degenerate
SHAPE_FLOOR = 1e-3  # lower bound on the shape score when used as a divisor

FLAG_DEGENERATE_SHAPE = "degenerate_shape"
FLAG_EMPTY_PATCH = "empty_patch"

_SQRT2 = math.sqrt(2.0)


class DegenerateShapeError(ValueError):
    pass


class EmptyPatchError(ValueError):
    pass


@dataclass(frozen=True)
class Aabb:
    min_corner: np.ndarray
    max_corner: np.ndarray

    @property
    def dims(self) -> np.ndarray:
        return self.max_corner - self.min_corner

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min_corner + self.max_corner)

    @property
    def volume(self) -> float:
        dx, dy, dz = self.dims
        return float(dx * dy * dz)


@dataclass
class ObstacleFeatures:
    centroid: np.ndarray
    box_dims: np.ndarray
    volume: float
    shape: float
    mean_normal: Optional[np.ndarray]
    theta: Optional[float]
    surface_count: int
    point_count: int = 0
    cluster: int = -1
    flags: list = field(default_factory=list)

    @property
    def position(self) -> np.ndarray:
        return self.centroid

    @property
    def usable(self) -> bool:
        return not self.flags

    def to_dict(self) -> dict:
        def vec(v):
            return None if v is None else [float(x) for x in v]

        return {
            "centroid": vec(self.centroid),
            "box_dims": vec(self.box_dims),
            "volume": float(self.volume),
            "shape": float(self.shape),
            "mean_normal": vec(self.mean_normal),
            "theta": None if self.theta is None else float(self.theta),
            "surface_count": int(self.surface_count),
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObstacleFeatures":
        mn = d.get("mean_normal")
        return cls(
            centroid=np.asarray(d["centroid"], dtype=float),
            box_dims=np.asarray(d["box_dims"], dtype=float),
            volume=float(d["volume"]),
            shape=float(d["shape"]),
            mean_normal=None if mn is None else np.asarray(mn, dtype=float),
            theta=None if d.get("theta") is None else float(d["theta"]),
            surface_count=int(d.get("surface_count", 0)),
            flags=list(d.get("flags", [])),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def compute_aabb(points) -> Aabb:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("cannot bound an empty point set")
    return Aabb(pts.min(axis=0), pts.max(axis=0))


def scale_box(box: Aabb, s: float = 1.5) -> Aabb:
    """Scale the box about its center by ``s`` (half-extents times ``s``)."""
    if s < 1:
        raise ValueError("scale factor must be >= 1")
    half = 0.5 * box.dims * s
    c = box.center
    return Aabb(c - half, c + half)


def _quadric_design(p: np.ndarray) -> np.ndarray:
    x, y, z = p.T
    # cross terms carry sqrt(2) so the unit-norm gauge is rotation invariant
    return np.column_stack(
        [x * x, y * y, z * z, _SQRT2 * x * y, _SQRT2 * x * z, _SQRT2 * y * z, x, y, z, np.ones_like(x)]
    )


def fit_ellipsoid(points) -> tuple[np.ndarray, float]:
    """Least-squares quadric fit by algebraic distance.

    Points are centered on their centroid and divided by their mean
    distance to it. The coefficient vector (unit norm) is the right
    singular vector of the design matrix with the smallest singular value.

    Returns
    -------
    coefficients : ndarray, shape (10,)
        ``a..j`` of ``ax^2 + by^2 + cz^2 + dxy + exz + fyz + gx + hy + iz + j``
        in the normalized frame.
    shape : float
        RMS algebraic residual over the points.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 10:
        raise DegenerateShapeError(f"need at least 10 points, got {len(pts)}")
    c = pts - pts.mean(axis=0)
    scale = np.linalg.norm(c, axis=1).mean()
    if scale <= 0:
        raise DegenerateShapeError("all points coincide")
    c /= scale
    D = _quadric_design(c)
    _, sv, vt = np.linalg.svd(D, full_matrices=False)
    if sv[-2] <= 1e-9 * sv[0]:
        raise DegenerateShapeError("design matrix is rank deficient (e.g. coplanar points)")
    w = vt[-1]
    resid = D @ w
    coef = w.copy()
    coef[3:6] *= _SQRT2
    return coef, float(np.sqrt(np.mean(resid**2)))


def surface_patch(
    segmentation: SceneSegmentation,
    cloud: PointCloud,
    normals: Optional[NormalField],
    obstacle_index: int,
    s: float = 1.5,
) -> tuple[np.ndarray, np.ndarray]:
    """Ground points under the ``s``-scaled obstacle box and their normals.

    Membership: x and y inside the scaled footprint and z at or above the
    scaled box floor. Raises :class:`EmptyPatchError` when nothing qualifies.
    """
    if normals is None:
        normals = segmentation.normals
    members = segmentation.clusters[obstacle_index]
    box = scale_box(compute_aabb(cloud.points[members]), s)
    g = segmentation.ground_indices
    p = cloud.points[g]
    inside = (
        (p[:, 0] >= box.min_corner[0])
        & (p[:, 0] <= box.max_corner[0])
        & (p[:, 1] >= box.min_corner[1])
        & (p[:, 1] <= box.max_corner[1])
        & (p[:, 2] >= box.min_corner[2])
    )
    idx = g[inside]
    idx = idx[normals.valid_mask[idx]]
    if len(idx) == 0:
        raise EmptyPatchError(f"obstacle {obstacle_index} has no supporting ground points")
    return idx, normals.normals[idx]


def mean_surface_normal(normal_set: np.ndarray) -> np.ndarray:
    ns = np.asarray(normal_set, dtype=float).reshape(-1, 3)
    if len(ns) == 0:
        raise ValueError("empty normal set")
    n = canonicalize(ns).mean(axis=0)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        raise ValueError("mean normal has zero length")
    return canonicalize(n / norm)


def compute_theta(centroid, mean_normal) -> float:
    """Angle in [0, pi] between the robot-to-obstacle vector and the normal."""
    c = np.asarray(centroid, dtype=float)
    n = np.asarray(mean_normal, dtype=float)
    nc, nn = np.linalg.norm(c), np.linalg.norm(n)
    if nc == 0 or nn == 0:
        raise ValueError("theta needs non-zero centroid and normal")
    cos = float(c @ n) / (nc * nn)
    return math.acos(min(1.0, max(-1.0, cos)))


def extract_features(
    segmentation: SceneSegmentation,
    cloud: PointCloud,
    normals: Optional[NormalField] = None,
    s: float = 1.5,
) -> list[ObstacleFeatures]:
    if normals is None:
        normals = segmentation.normals
    out = []
    for j, members in enumerate(segmentation.clusters):
        pts = cloud.points[members]
        box = compute_aabb(pts)
        centroid = pts.mean(axis=0)
        flags = []
        try:
            _, shape = fit_ellipsoid(pts)
        except DegenerateShapeError:
            shape = SHAPE_MAX
            flags.append(FLAG_DEGENERATE_SHAPE)
        mean_n, theta, count = None, None, 0
        try:
            idx, nset = surface_patch(segmentation, cloud, normals, j, s)
            count = len(idx)
            mean_n = mean_surface_normal(nset)
            theta = compute_theta(centroid, mean_n)
        except (EmptyPatchError, ValueError):
            flags.append(FLAG_EMPTY_PATCH)
        out.append(
            ObstacleFeatures(
                centroid=centroid,
                box_dims=box.dims,
                volume=box.volume,
                shape=shape,
                mean_normal=mean_n,
                theta=theta,
                surface_count=count,
                point_count=len(members),
                cluster=j,
                flags=flags,
            )
        )
    return out
