"""Surface normals, ground/obstacle segmentation and DBSCAN clustering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .pointcloud import PointCloud, SpatialIndex, build_index, knn_within

_Z_SIGN_EPS = 1e-9


class DegenerateNormalError(ValueError):
    """No usable normals, or a median normal that collapses to zero length."""


@dataclass(frozen=True)
class NormalField:
    normals: np.ndarray  # (n, 3), unit rows where valid_mask
    valid_mask: np.ndarray  # (n,) bool

    def __len__(self) -> int:
        return len(self.normals)


@dataclass(frozen=True)
class SceneSegmentation:
    ground_indices: np.ndarray
    clusters: list  # list of index arrays, cluster j -> points
    labels: np.ndarray  # -1 ground, j >= 0 cluster j
    n_med: np.ndarray
    normals: NormalField

    @property
    def n_obstacles(self) -> int:
        return len(self.clusters)

    @property
    def ground_mask(self) -> np.ndarray:
        return self.labels < 0


@dataclass(frozen=True)
class SegmentParams:
    k: int = 30
    r: float = 0.2
    T_cs: float = 0.85
    epsilon: float = 0.5
    min_pts: int = 5


def canonicalize(normals: np.ndarray) -> np.ndarray:
    """Flip vectors so z >= 0; when |z| is negligible, so that x >= 0."""
    n = np.array(normals, dtype=float, copy=True)
    flat = n.ndim == 1
    n = n.reshape(-1, 3)
    z = n[:, 2]
    flip = np.where(np.abs(z) < _Z_SIGN_EPS, n[:, 0] < 0, z < 0)
    n[flip] *= -1.0
    return n[0] if flat else n


def estimate_normals(cloud: PointCloud, index: SpatialIndex | None = None, k: int = 30, r: float = 0.2) -> NormalField:
    """Per-point normal from the covariance of its k nearest neighbors within r.

    The normal is the eigenvector of the smallest eigenvalue. Points with
    fewer than three neighbors (self included) are marked invalid.
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    pts = cloud.points
    n = len(pts)
    if index is None:
        index = build_index(cloud)
    if n == 0:
        return NormalField(np.zeros((0, 3)), np.zeros(0, dtype=bool))

    idx, mask = knn_within(index, pts, k, r)
    counts = mask.sum(axis=1)
    valid = counts >= 3

    nb = pts[idx]  # (n, k, 3)
    w = mask[..., None].astype(float)
    cnt = np.maximum(counts, 1)[:, None]
    centroid = (nb * w).sum(axis=1) / cnt
    d = (nb - centroid[:, None, :]) * w
    cov = np.einsum("nki,nkj->nij", d, d) / cnt[..., None]

    normals = np.zeros((n, 3))
    if valid.any():
        _, vecs = np.linalg.eigh(cov[valid])
        v = vecs[:, :, 0]
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        normals[valid] = canonicalize(v)
    return NormalField(normals, valid)


def median_normal(field: NormalField) -> np.ndarray:
    """Component-wise median of the valid normals, renormalized."""
    vals = field.normals[field.valid_mask]
    if len(vals) == 0:
        raise DegenerateNormalError("no valid normals to take a median of")
    med = np.median(vals, axis=0)
    norm = np.linalg.norm(med)
    if norm < 1e-12:
        raise DegenerateNormalError("median normal has zero length")
    return canonicalize(med / norm)


def segment_ground(field: NormalField, n_med: np.ndarray, T_cs: float = 0.85) -> np.ndarray:
    """Indices whose normal has |cos| >= T_cs with ``n_med``, plus invalid points."""
    if not 0 < T_cs <= 1:
        raise ValueError("T_cs must lie in (0, 1]")
    n_med = np.asarray(n_med, dtype=float)
    n_med = n_med / np.linalg.norm(n_med)
    cos = np.abs(field.normals @ n_med)
    ground = (cos >= T_cs) | ~field.valid_mask
    return np.flatnonzero(ground)


def dbscan(points: np.ndarray, epsilon: float = 0.5, min_pts: int = 5) -> np.ndarray:
    """DBSCAN labels: -1 for noise, 0..m-1 for clusters.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``epsilon``. Clusters are the connected components of core
    points. A border point touching several clusters joins the one with
    the smallest core index. Final numbering follows each cluster's
    smallest member index.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels

    pairs = cKDTree(pts).query_pairs(epsilon, output_type="ndarray")
    i, j = (pairs[:, 0], pairs[:, 1]) if len(pairs) else (np.zeros(0, int), np.zeros(0, int))
    degree = np.bincount(np.concatenate([i, j]), minlength=n) + 1
    core = degree >= min_pts
    if not core.any():
        return labels

    cc = core[i] & core[j]
    graph = coo_matrix((np.ones(cc.sum()), (i[cc], j[cc])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)

    core_idx = np.flatnonzero(core)
    comp_core = comp[core_idx]
    labels[core_idx] = _rank_by_first_member(comp_core, core_idx, comp.max() + 1)

    # border points: non-core with a core neighbor
    src = np.concatenate([i, j])
    dst = np.concatenate([j, i])
    edge = ~core[src] & core[dst]
    if edge.any():
        big = np.iinfo(np.int64).max
        best = np.full(n, big)
        np.minimum.at(best, src[edge], labels[dst[edge]])
        border = np.flatnonzero(best != big)
        labels[border] = best[border]

    # a border point may precede every core point of its cluster
    member = np.flatnonzero(labels >= 0)
    labels[member] = _rank_by_first_member(labels[member], member, labels.max() + 1)
    return labels


def _rank_by_first_member(group: np.ndarray, index: np.ndarray, n_groups: int) -> np.ndarray:
    """Renumber ``group`` ids 0.. in order of each group's smallest ``index``."""
    first = np.full(n_groups, np.iinfo(np.int64).max)
    np.minimum.at(first, group, index)
    present = np.flatnonzero(first != np.iinfo(np.int64).max)
    rank = np.full(n_groups, -1, dtype=np.int64)
    rank[present[np.argsort(first[present])]] = np.arange(len(present))
    return rank[group]


def segment_scene(cloud: PointCloud, params: SegmentParams = SegmentParams()) -> SceneSegmentation:
    """Normals -> median ground normal -> ground mask -> DBSCAN on the rest.

    DBSCAN noise is folded back into the ground set.
    """
    if len(cloud) == 0:
        raise ValueError("cannot segment an empty cloud")
    index = build_index(cloud)
    field = estimate_normals(cloud, index, params.k, params.r)
    n_med = median_normal(field)
    ground = np.zeros(len(cloud), dtype=bool)
    ground[segment_ground(field, n_med, params.T_cs)] = True

    labels = np.full(len(cloud), -1, dtype=np.int64)
    rest = np.flatnonzero(~ground)
    if len(rest):
        labels[rest] = dbscan(cloud.points[rest], params.epsilon, params.min_pts)
    m = int(labels.max()) + 1 if len(labels) else 0
    clusters = [np.flatnonzero(labels == j) for j in range(m)]
    return SceneSegmentation(
        ground_indices=np.flatnonzero(labels < 0),
        clusters=clusters,
        labels=labels,
        n_med=n_med,
        normals=field,
    )
