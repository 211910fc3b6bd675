"""Point cloud container, ASCII PLY I/O and exact neighbor queries.

Coordinates are meters in a z-up frame with the robot at the origin and
x pointing forward. Every downstream mask or label refers to row
positions of ``PointCloud.points``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

PathLike = Union[str, Path]

# Widens kd-tree candidate searches so that the exact ``<= r`` filter
# below never loses a boundary point to floating point in the tree.
_RADIUS_SLACK = 1e-9


class PlyError(ValueError):
    """Raised for malformed or unsupported PLY input."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of 3D points with optional per-point sidecars."""

    points: np.ndarray
    frame_id: str = "robot"
    normals: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(nrm) != len(pts):
                raise ValueError("normals length does not match point count")
            object.__setattr__(self, "normals", nrm)
        if self.labels is not None:
            lab = np.asarray(self.labels).astype(np.int64).reshape(-1)
            if len(lab) != len(pts):
                raise ValueError("labels length does not match point count")
            object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, idx) -> "PointCloud":
        idx = np.asarray(idx)
        return PointCloud(
            self.points[idx],
            self.frame_id,
            None if self.normals is None else self.normals[idx],
            None if self.labels is None else self.labels[idx],
        )


def concatenate(clouds: Sequence[PointCloud], frame_id: Optional[str] = None) -> PointCloud:
    """Stack clouds in order. Sidecars survive only if every cloud has them."""
    if not clouds:
        return PointCloud(np.empty((0, 3)), frame_id or "robot")
    pts = np.vstack([c.points for c in clouds])
    normals = None
    if all(c.normals is not None for c in clouds):
        normals = np.vstack([c.normals for c in clouds])
    labels = None
    if all(c.labels is not None for c in clouds):
        labels = np.concatenate([c.labels for c in clouds])
    return PointCloud(pts, frame_id or clouds[0].frame_id, normals, labels)


# ---------------------------------------------------------------------------
# PLY


_FLOAT_TYPES = {"float", "float32", "float64", "double"}
_INT_TYPES = {"int", "int32", "int16", "int8", "uint", "uint8", "uint16", "uint32", "char", "uchar", "short", "ushort"}


def load_ply(path: PathLike) -> PointCloud:
    """Read an ASCII PLY file.

    Only the ``vertex`` element is interpreted. ``x, y, z`` are required;
    ``nx, ny, nz`` and an integer ``label`` property are picked up as
    sidecars when present. Other vertex properties are ignored.
    """
    path = Path(path)
    with path.open("r", encoding="ascii", errors="replace") as fh:
        lines = fh.read().splitlines()

    if not lines or lines[0].strip() != "ply":
        raise PlyError("missing 'ply' magic", 1)

    elements = []  # (name, count, [(prop, type)])
    fmt = None
    lineno = 1
    header_end = None
    for lineno in range(2, len(lines) + 1):
        tokens = lines[lineno - 1].split()
        if not tokens:
            continue
        key = tokens[0]
        if key == "format":
            if len(tokens) != 3:
                raise PlyError("bad format line", lineno)
            fmt = tokens[1]
            if fmt != "ascii":
                raise PlyError(f"unsupported encoding {fmt!r}; only ascii is supported", lineno)
        elif key in ("comment", "obj_info"):
            continue
        elif key == "element":
            if len(tokens) != 3:
                raise PlyError("bad element line", lineno)
            try:
                count = int(tokens[2])
            except ValueError:
                raise PlyError(f"bad element count {tokens[2]!r}", lineno) from None
            if count < 0:
                raise PlyError("negative element count", lineno)
            elements.append((tokens[1], count, []))
        elif key == "property":
            if not elements:
                raise PlyError("property before any element", lineno)
            if tokens[1] == "list":
                if len(tokens) != 5:
                    raise PlyError("bad list property", lineno)
                elements[-1][2].append((tokens[4], "list"))
            else:
                if len(tokens) != 3:
                    raise PlyError("bad property line", lineno)
                elements[-1][2].append((tokens[2], tokens[1]))
        elif key == "end_header":
            header_end = lineno
            break
        else:
            raise PlyError(f"unexpected header keyword {key!r}", lineno)

    if header_end is None:
        raise PlyError("missing end_header", lineno)
    if fmt is None:
        raise PlyError("missing format line", header_end)

    cursor = header_end  # index of the next body line in ``lines``
    vertex = None
    for name, count, props in elements:
        if name != "vertex":
            cursor += count
            continue
        vertex = _parse_vertices(lines, cursor, count, props)
        cursor += count
    if vertex is None:
        raise PlyError("no vertex element", header_end)
    return vertex


def _parse_vertices(lines, start, count, props) -> PointCloud:
    names = [p for p, _ in props]
    types = dict(props)
    for axis in ("x", "y", "z"):
        if axis not in types:
            raise PlyError(f"vertex element lacks property {axis!r}")
        if types[axis] not in _FLOAT_TYPES:
            raise PlyError(f"property {axis!r} must be floating point")
    if any(t == "list" for t in types.values()):
        raise PlyError("list properties on vertex are not supported")
    has_normals = all(a in types for a in ("nx", "ny", "nz"))
    has_label = "label" in types
    if has_label and types["label"] not in _INT_TYPES:
        raise PlyError("property 'label' must be an integer type")

    if len(lines) < start + count:
        raise PlyError(f"expected {count} vertices, file ends early", len(lines))

    col = {n: i for i, n in enumerate(names)}
    pts = np.empty((count, 3))
    nrm = np.empty((count, 3)) if has_normals else None
    lab = np.empty(count, dtype=np.int64) if has_label else None
    for row in range(count):
        lineno = start + row + 1
        tokens = lines[start + row].split()
        if len(tokens) != len(names):
            raise PlyError(f"expected {len(names)} values, got {len(tokens)}", lineno)
        try:
            xyz = [float(tokens[col[a]]) for a in ("x", "y", "z")]
        except ValueError:
            raise PlyError("non-numeric coordinate", lineno) from None
        if not all(math.isfinite(v) for v in xyz):
            raise PlyError("non-finite coordinate", lineno)
        pts[row] = xyz
        if nrm is not None:
            try:
                nrm[row] = [float(tokens[col[a]]) for a in ("nx", "ny", "nz")]
            except ValueError:
                raise PlyError("non-numeric normal", lineno) from None
        if lab is not None:
            try:
                lab[row] = int(tokens[col["label"]])
            except ValueError:
                raise PlyError("non-integer label", lineno) from None
    return PointCloud(pts, "robot", nrm, lab)


def save_ply(
    cloud: PointCloud,
    path: PathLike,
    normals: Optional[np.ndarray] = None,
    labels: Optional[np.ndarray] = None,
) -> None:
    """Write ``cloud`` as ASCII PLY with ``%.6f`` coordinates.

    The header declares exactly the properties supplied: normals and labels
    are written only when passed (or stored on the cloud).
    """
    n = len(cloud)
    if normals is None:
        normals = cloud.normals
    if labels is None:
        labels = cloud.labels
    if normals is not None:
        normals = np.asarray(normals, dtype=float).reshape(-1, 3)
        if len(normals) != n:
            raise ValueError(f"normals length {len(normals)} != cloud size {n}")
    if labels is not None:
        labels = np.asarray(labels).reshape(-1)
        if len(labels) != n:
            raise ValueError(f"labels length {len(labels)} != cloud size {n}")

    header = ["ply", "format ascii 1.0", f"element vertex {n}"]
    header += [f"property float {a}" for a in ("x", "y", "z")]
    cols = [cloud.points]
    fmts = ["%.6f"] * 3
    if normals is not None:
        header += [f"property float {a}" for a in ("nx", "ny", "nz")]
        cols.append(normals)
        fmts += ["%.6f"] * 3
    if labels is not None:
        header.append("property int label")
    header.append("end_header")

    path = Path(path)
    with path.open("w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(header) + "\n")
        if n == 0:
            return
        body = np.hstack(cols)
        if labels is None:
            np.savetxt(fh, body, fmt=fmts)
        else:
            for row, lab in zip(body, labels.astype(np.int64)):
                fh.write(" ".join(f % v for f, v in zip(fmts, row)) + f" {int(lab)}\n")


# ---------------------------------------------------------------------------
# Neighbor search


@dataclass(frozen=True)
class SpatialIndex:
    """Exact neighbor index over a fixed cloud (kd-tree backed)."""

    points: np.ndarray
    tree: Optional[cKDTree] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.points)


def build_index(cloud: Union[PointCloud, np.ndarray]) -> SpatialIndex:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float).reshape(-1, 3)
    tree = cKDTree(pts) if len(pts) else None
    return SpatialIndex(pts, tree)


def neighbors(index: SpatialIndex, query, k: int, r: float) -> list[int]:
    """Indices of up to ``k`` points within distance ``r`` of ``query``.

    Sorted by ascending distance, ties broken by ascending index. A cloud
    point queried at its own location is its own first neighbor.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if r <= 0:
        raise ValueError("r must be > 0")
    if index.tree is None:
        return []
    q = np.asarray(query, dtype=float).reshape(3)
    cand = np.asarray(index.tree.query_ball_point(q, r * (1 + _RADIUS_SLACK) + _RADIUS_SLACK), dtype=np.int64)
    if cand.size == 0:
        return []
    d = np.sqrt(((index.points[cand] - q) ** 2).sum(axis=1))
    keep = d <= r
    cand, d = cand[keep], d[keep]
    order = np.lexsort((cand, d))
    return cand[order[:k]].tolist()


def knn_within(index: SpatialIndex, queries: np.ndarray, k: int, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Batched form of :func:`neighbors` for every row of ``queries``.

    Returns ``(idx, mask)`` of shape ``(m, k)``; ``mask`` marks real
    neighbors, padded slots hold index 0. Same ordering rules as
    :func:`neighbors` as long as fewer than 8 points tie at the k-th
    distance.
    """
    queries = np.asarray(queries, dtype=float).reshape(-1, 3)
    m = len(queries)
    if index.tree is None or m == 0:
        return np.zeros((m, k), dtype=np.int64), np.zeros((m, k), dtype=bool)
    kq = min(k + 8, len(index))
    _, cand = index.tree.query(queries, k=kq, distance_upper_bound=r * (1 + _RADIUS_SLACK) + _RADIUS_SLACK)
    cand = np.asarray(cand).reshape(m, kq)
    missing = cand >= len(index)
    safe = np.where(missing, 0, cand)
    d = np.sqrt(((index.points[safe] - queries[:, None, :]) ** 2).sum(axis=2))
    d = np.where(missing | (d > r), np.inf, d)
    order = np.lexsort((safe, d), axis=-1)[:, :k]
    idx = np.take_along_axis(safe, order, axis=1)
    mask = np.isfinite(np.take_along_axis(d, order, axis=1))
    if kq < k:
        pad = k - kq
        idx = np.hstack([idx, np.zeros((m, pad), dtype=np.int64)])
        mask = np.hstack([mask, np.zeros((m, pad), dtype=bool)])
    return np.where(mask, idx, 0), mask
