"""Synthetic terrain, rocks, scenes and a quasi-static push-force oracle.

Stands in for a physics simulator: Perlin-noise height maps with hills
and pits, a fixed boulder catalog, point-cloud sampling with ground-truth
membership, and Coulomb friction force signals.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull, Delaunay
from scipy.spatial.transform import Rotation

from .affordance import ForceSignal, PushRecord, feature_vector, fmax
from .pointcloud import PointCloud, concatenate

log = logging.getLogger(__name__)

GRAVITY = 9.81
BASE_HALF_EXTENT = 0.5  # m; a unit-scale rock spans 1 m per axis
BLOCKY_EXPONENT = 0.5  # superellipsoid shape exponent; 1 is an ellipsoid
GROUND = -1
ARM_LIMIT = 150.0  # N; above Boulder 1 uphill, below Boulder 0 on flat ground
ROCK_DENSITY = 1500.0  # points/m^2; keeps the 30-neighbour normal patch small on the smallest rock
GROUND_SPACING = 0.05  # m


# ---------------------------------------------------------------------------
# Perlin noise


_GRADIENTS = np.array([(math.cos(a), math.sin(a)) for a in np.arange(8) * math.pi / 4])


def _perm_table(seed: int) -> np.ndarray:
    perm = np.random.default_rng(seed).permutation(256)
    return np.concatenate([perm, perm])


def _fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


def perlin2(x, y, seed: int = 0):
    """Classic 2D gradient noise, zero on the integer lattice.

    Accepts scalars or arrays. Gradients are unit vectors in eight
    directions, so values stay within about +/-0.71.
    """
    scalar = np.isscalar(x) and np.isscalar(y)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    p = _perm_table(seed)

    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    xi = x0.astype(np.int64) & 255
    yi = y0.astype(np.int64) & 255

    def corner(dx, dy):
        h = p[p[xi + dx] + yi + dy] & 7
        g = _GRADIENTS[h]
        return g[..., 0] * (fx - dx) + g[..., 1] * (fy - dy)

    u = _fade(fx)
    v = _fade(fy)
    n00, n10, n01, n11 = corner(0, 0), corner(1, 0), corner(0, 1), corner(1, 1)
    nx0 = n00 + u * (n10 - n00)
    nx1 = n01 + u * (n11 - n01)
    out = nx0 + v * (nx1 - nx0)
    return float(out) if scalar else out


# ---------------------------------------------------------------------------
# Height maps


@dataclass(frozen=True)
class HeightMap:
    """Heights on a regular grid; ``heights[iy, ix]`` sits at origin + (ix, iy) * cell."""

    heights: np.ndarray
    cell_size: float
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=float)
        if h.ndim != 2 or min(h.shape) < 2:
            raise ValueError("height grid must be 2D with at least 2x2 samples")
        if not np.all(np.isfinite(h)):
            raise ValueError("heights must be finite")
        object.__setattr__(self, "heights", h)

    @property
    def extent(self) -> tuple:
        """(xmin, xmax, ymin, ymax)."""
        ny, nx = self.heights.shape
        x0, y0 = self.origin
        return (x0, x0 + (nx - 1) * self.cell_size, y0, y0 + (ny - 1) * self.cell_size)

    def contains(self, x, y) -> np.ndarray:
        xmin, xmax, ymin, ymax = self.extent
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)

    def _cell(self, x, y):
        ny, nx = self.heights.shape
        gx = (np.asarray(x, dtype=float) - self.origin[0]) / self.cell_size
        gy = (np.asarray(y, dtype=float) - self.origin[1]) / self.cell_size
        ix = np.clip(np.floor(gx).astype(np.int64), 0, nx - 2)
        iy = np.clip(np.floor(gy).astype(np.int64), 0, ny - 2)
        return ix, iy, gx - ix, gy - iy

    def height_at(self, x, y):
        """Bilinear height; positions outside the grid are clamped to the border cell."""
        h = self.heights
        ix, iy, tx, ty = self._cell(x, y)
        h00 = h[iy, ix]
        h10 = h[iy, ix + 1]
        h01 = h[iy + 1, ix]
        h11 = h[iy + 1, ix + 1]
        return (1 - ty) * ((1 - tx) * h00 + tx * h10) + ty * ((1 - tx) * h01 + tx * h11)

    def gradient_at(self, x, y, step: Optional[float] = None) -> np.ndarray:
        """Central-difference gradient (dh/dx, dh/dy), stacked on the last axis."""
        e = self.cell_size if step is None else step
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gx = (self.height_at(x + e, y) - self.height_at(x - e, y)) / (2 * e)
        gy = (self.height_at(x, y + e) - self.height_at(x, y - e)) / (2 * e)
        return np.stack([gx, gy], axis=-1)

    def normal_at(self, x, y) -> np.ndarray:
        g = self.gradient_at(x, y)
        n = np.concatenate([-g, np.ones(g.shape[:-1] + (1,))], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def shifted(self, dz: float) -> "HeightMap":
        return HeightMap(self.heights + dz, self.cell_size, self.origin)


def _grid(extent, cell_size):
    w, h = extent
    nx = int(round(w / cell_size)) + 1
    ny = int(round(h / cell_size)) + 1
    xs = np.arange(nx) * cell_size
    ys = np.arange(ny) * cell_size
    return np.meshgrid(xs, ys)


def make_terrain(
    extent=(20.0, 20.0),
    cell_size: float = 0.1,
    seed: int = 0,
    amplitude: float = 0.5,
    sigma: float = 2.0,
    noise_scale: float = 2.0,
    n_hills: int = 2,
    n_pits: int = 2,
) -> HeightMap:
    """Flat ground with Gaussian-windowed Perlin bumps added (hills) or subtracted (pits).

    Each patch is ``amplitude * window * (1 + noise) / 2`` so hills stay
    above and pits below the zero base.
    """
    if min(extent) <= 0 or cell_size <= 0:
        raise ValueError("extent and cell_size must be positive")
    X, Y = _grid(extent, cell_size)
    H = np.zeros_like(X)
    rng = np.random.default_rng(seed)
    signs = [1.0] * n_hills + [-1.0] * n_pits
    for sign in signs:
        cx = rng.uniform(0, extent[0])
        cy = rng.uniform(0, extent[1])
        patch_seed = int(rng.integers(0, 2**31 - 1))
        ox, oy = rng.uniform(0, 64, size=2)
        if amplitude == 0:
            continue
        window = np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * sigma**2))
        noise = perlin2(X / noise_scale + ox, Y / noise_scale + oy, patch_seed)
        H += sign * amplitude * window * (1.0 + noise) / 2.0
    return HeightMap(H, cell_size, (0.0, 0.0))


def plane_terrain(extent=(8.0, 8.0), cell_size: float = 0.1, slope_deg: float = 0.0, heading: float = 0.0, z0: float = 0.0) -> HeightMap:
    """A planar height map rising at ``slope_deg`` along direction ``heading`` (radians)."""
    X, Y = _grid(extent, cell_size)
    t = math.tan(math.radians(slope_deg))
    H = z0 + t * (math.cos(heading) * X + math.sin(heading) * Y)
    return HeightMap(H, cell_size, (0.0, 0.0))


# ---------------------------------------------------------------------------
# Rocks


@dataclass(frozen=True)
class RockSpec:
    name: str
    scale: tuple
    mass: float

    @property
    def half_extents(self) -> np.ndarray:
        return BASE_HALF_EXTENT * np.asarray(self.scale, dtype=float)


CATALOG = (
    RockSpec("Boulder 0", (1.0, 1.0, 1.0), 37.75),
    RockSpec("Boulder 1", (0.6, 0.6, 0.6), 8.85),
    RockSpec("Boulder 2", (0.5, 0.5, 0.5), 5.12),
    RockSpec("Boulder 3", (0.3, 0.3, 0.4), 1.20),
    RockSpec("Boulder 4", (0.25, 0.25, 0.4), 0.78),
    RockSpec("Boulder 5", (0.2, 0.2, 0.4), 0.5),
)


def rock_by_name(name: str) -> RockSpec:
    for r in CATALOG:
        if r.name == name:
            return r
    raise KeyError(name)


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = math.pi * (1 + 5**0.5) * i
    return np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])


def _superellipsoid_radial(dirs, axes, exponent):
    """Surface point along each unit direction, its outward normal, and area weight."""
    q = 2.0 / exponent
    a = np.asarray(axes, dtype=float)
    s = (np.abs(dirs / a) ** q).sum(axis=1)
    rho = s ** (-1.0 / q)
    p = dirs * rho[:, None]
    grad = np.sign(p) * np.abs(p / a) ** (q - 1) / a
    n = grad / np.linalg.norm(grad, axis=1, keepdims=True)
    # dA / dOmega for a star-shaped surface r = rho(d)
    w = rho**2 / np.einsum("ij,ij->i", n, dirs)
    return p, n, w


def superellipsoid_area(axes, exponent: float = BLOCKY_EXPONENT, n: int = 40000) -> float:
    _, _, w = _superellipsoid_radial(_fibonacci_sphere(n), axes, exponent)
    return float(4 * math.pi * w.mean())


def _as_matrix(rotation) -> np.ndarray:
    if rotation is None:
        return np.eye(3)
    if isinstance(rotation, Rotation):
        return rotation.as_matrix()
    return np.asarray(rotation, dtype=float).reshape(3, 3)


def make_rock(
    spec: RockSpec,
    rotation=None,
    surface_density: float = ROCK_DENSITY,
    seed: int = 0,
    exponent: float = BLOCKY_EXPONENT,
) -> PointCloud:
    """Surface samples of the scaled, rotated base superellipsoid, centered at the origin.

    Sampling is uniform in area (rejection on the radial-map Jacobian); the
    point count is ``round(density * area)`` and so does not depend on the
    rotation. Outward unit normals ride along as the cloud's normals.
    """
    if not surface_density > 0:
        raise ValueError("surface density must be positive")
    axes = spec.half_extents
    dense = _fibonacci_sphere(40000)
    _, _, w_ref = _superellipsoid_radial(dense, axes, exponent)
    area = float(4 * math.pi * w_ref.mean())
    w_cap = 1.05 * w_ref.max()
    n_target = max(1, int(round(surface_density * area)))

    rng = np.random.default_rng(seed)
    pts, nrm = [], []
    have = 0
    while have < n_target:
        d = rng.normal(size=(2 * n_target + 64, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        p, n, w = _superellipsoid_radial(d, axes, exponent)
        keep = rng.uniform(size=len(w)) * w_cap < w
        pts.append(p[keep])
        nrm.append(n[keep])
        have += int(keep.sum())
    p = np.vstack(pts)[:n_target]
    n = np.vstack(nrm)[:n_target]
    R = _as_matrix(rotation)
    return PointCloud(p @ R.T, "rock", n @ R.T)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation matrix."""
    return Rotation.random(random_state=rng).as_matrix()


def place_rock(terrain: HeightMap, rock: PointCloud, x: float, y: float) -> tuple[PointCloud, float]:
    """Translate the rock to (x, y) and drop it onto the terrain.

    The lowest rock point is set to the highest terrain height found
    under any rock point's (x, y).
    """
    pts = rock.points + np.array([x, y, 0.0])
    if not terrain.contains(x, y) or not np.all(terrain.contains(pts[:, 0], pts[:, 1])):
        raise ValueError(f"placement ({x:.3f}, {y:.3f}) puts the rock outside the terrain")
    contact = float(np.max(terrain.height_at(pts[:, 0], pts[:, 1])))
    pts[:, 2] += contact - pts[:, 2].min()
    return PointCloud(pts, rock.frame_id, rock.normals, rock.labels), contact


def _inside_hull_xy(hull_pts: np.ndarray, query: np.ndarray) -> np.ndarray:
    hull = ConvexHull(hull_pts)
    tri = Delaunay(hull_pts[hull.vertices])
    return tri.find_simplex(query) >= 0


def sample_scene(
    terrain: HeightMap,
    rocks: Sequence[PointCloud] = (),
    ground_spacing: float = GROUND_SPACING,
    seed: int = 0,
    region: Optional[tuple] = None,
    jitter: float = 0.25,
    occlude: bool = True,
    underside_cutoff: Optional[float] = -0.3,
) -> PointCloud:
    """Terrain on a jittered grid plus rock surface points.

    ``labels`` hold -1 for terrain and ``i`` for ``rocks[i]``; ``normals``
    hold the analytic surface normals. With ``occlude`` the terrain under
    each rock footprint is dropped; rock points whose outward normal has
    z below ``underside_cutoff`` (facing the ground) are dropped too.
    """
    if not ground_spacing > 0:
        raise ValueError("ground spacing must be positive")
    xmin, xmax, ymin, ymax = terrain.extent if region is None else region
    rng = np.random.default_rng(seed)
    xs = np.arange(xmin, xmax + 1e-9, ground_spacing)
    ys = np.arange(ymin, ymax + 1e-9, ground_spacing)
    GX, GY = np.meshgrid(xs, ys)
    gx = GX.ravel() + rng.uniform(-jitter, jitter, GX.size) * ground_spacing
    gy = GY.ravel() + rng.uniform(-jitter, jitter, GY.size) * ground_spacing
    inside = terrain.contains(gx, gy) & (gx >= xmin) & (gx <= xmax) & (gy >= ymin) & (gy <= ymax)
    gx, gy = gx[inside], gy[inside]

    keep = np.ones(len(gx), dtype=bool)
    parts_pts, parts_nrm, parts_lab = [], [], []
    for i, rock in enumerate(rocks):
        if occlude and len(rock) >= 3:
            keep &= ~_inside_hull_xy(rock.points[:, :2], np.column_stack([gx, gy]))
        rp, rn = rock.points, rock.normals
        if rn is None:
            rn = np.tile([0.0, 0.0, 1.0], (len(rp), 1))
        if underside_cutoff is not None:
            vis = rn[:, 2] >= underside_cutoff
            rp, rn = rp[vis], rn[vis]
        parts_pts.append(rp)
        parts_nrm.append(rn)
        parts_lab.append(np.full(len(rp), i, dtype=np.int64))

    gx, gy = gx[keep], gy[keep]
    ground = np.column_stack([gx, gy, terrain.height_at(gx, gy)])
    gn = terrain.normal_at(gx, gy).reshape(-1, 3)
    ground_cloud = PointCloud(ground, "world", gn, np.full(len(ground), GROUND, dtype=np.int64))
    rock_clouds = [PointCloud(p, "world", n, l) for p, n, l in zip(parts_pts, parts_nrm, parts_lab)]
    return concatenate([ground_cloud] + rock_clouds, "world")


def rock_field(
    seed: int,
    n_rocks: Optional[int] = None,
    extent=(8.0, 8.0),
    surface_density: float = ROCK_DENSITY,
    ground_spacing: float = GROUND_SPACING,
    gap: float = 0.8,
) -> PointCloud:
    """Hilly terrain with 1-3 randomly rotated catalog rocks, world frame.

    Rocks are kept ``gap`` apart beyond their bounding spheres so that
    each forms its own cluster. Labels index the rocks in placement order.
    """
    rng = np.random.default_rng(seed)
    terrain = make_terrain(extent, 0.1, seed=int(rng.integers(2**31 - 1)))
    k = int(rng.integers(1, 4)) if n_rocks is None else n_rocks
    margin = 1.5
    rocks, spheres = [], []
    for _ in range(200 * max(k, 1)):
        if len(rocks) == k:
            break
        spec = CATALOG[int(rng.integers(len(CATALOG)))]
        xy = rng.uniform([margin, margin], [extent[0] - margin, extent[1] - margin])
        rad = BASE_HALF_EXTENT * math.sqrt(3) * max(spec.scale)
        if any(np.linalg.norm(xy - c) < rad + r + gap for c, r in spheres):
            continue
        cloud = make_rock(spec, random_rotation(rng), surface_density, int(rng.integers(2**31 - 1)))
        placed, _ = place_rock(terrain, cloud, *xy)
        rocks.append(placed)
        spheres.append((xy, rad))
    if len(rocks) < k:
        raise RuntimeError(f"could not place {k} rocks")
    region = (0.5, extent[0] - 0.5, 0.5, extent[1] - 0.5)
    return sample_scene(terrain, rocks, ground_spacing, seed, region)


def to_robot_frame(cloud: PointCloud, robot_xyz, heading: float) -> PointCloud:
    """Express ``cloud`` in a gravity-aligned frame at ``robot_xyz`` facing ``heading``."""
    c, s = math.cos(heading), math.sin(heading)
    R = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])  # world -> robot
    pts = (cloud.points - np.asarray(robot_xyz, dtype=float)) @ R.T
    nrm = None if cloud.normals is None else cloud.normals @ R.T
    return PointCloud(pts, "robot", nrm, cloud.labels)


# ---------------------------------------------------------------------------
# Force oracle


def required_force(mass: float, slope: float, mu: float) -> float:
    """Quasi-static push force ``m g (mu cos(slope) + sin(slope))``, floored at 0.1 N.

    ``slope`` is the incline along the push direction; positive is uphill.
    """
    return max(mass * GRAVITY * (mu * math.cos(slope) + math.sin(slope)), 0.1)


def force_oracle(
    mass: float,
    slope: float = 0.0,
    mu: float = 0.5,
    arm_limit: float = ARM_LIMIT,
    t: int = 100,
) -> ForceSignal:
    """Reaction force at the arm during one push.

    The magnitude ramps linearly toward the required force over the first
    30% of the samples. A movable rock then relaxes exponentially toward
    60% of the peak (sliding friction); a rock needing more than
    ``arm_limit`` clips at the limit for the rest of the push.
    """
    if not mass > 0:
        raise ValueError("mass must be positive")
    if not abs(slope) < math.pi / 2:
        raise ValueError("slope must lie in (-pi/2, pi/2)")
    if mu < 0:
        raise ValueError("friction coefficient must be non-negative")
    if t < 2:
        raise ValueError("need at least 2 samples")
    f_req = required_force(mass, slope, mu)
    k = np.arange(t, dtype=float)
    k_peak = max(1, int(round(0.3 * t)))
    ramp = f_req * k / k_peak
    if f_req <= arm_limit:
        tau = 0.15 * t
        mag = np.where(k <= k_peak, ramp, f_req * (0.6 + 0.4 * np.exp(-(k - k_peak) / tau)))
        mag[k_peak] = f_req
    else:
        mag = np.minimum(ramp, arm_limit)
    direction = np.array([-math.cos(slope), 0.0, -math.sin(slope)])
    return ForceSignal(mag[:, None] * direction)


# ---------------------------------------------------------------------------
# Scenes and datasets


TERRAIN_TYPES = ("uphill", "flat", "downhill")


@dataclass
class SceneSpec:
    seed: int
    rock: RockSpec
    rotation: np.ndarray
    placement: tuple
    mu: float
    robot_heading: float
    terrain_type: str
    slope: float  # incline along the push direction, radians
    robot_distances: tuple = ()
    robot_lateral: tuple = ()

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "rock": self.rock.name,
            "rotation": [float(v) for v in np.asarray(self.rotation).ravel()],
            "placement": [float(v) for v in self.placement],
            "mu": float(self.mu),
            "robot_heading": float(self.robot_heading),
            "terrain_type": self.terrain_type,
            "slope": float(self.slope),
            "robot_distances": [float(v) for v in self.robot_distances],
            "robot_lateral": [float(v) for v in self.robot_lateral],
        }


@dataclass(frozen=True)
class GenParams:
    frames: int = 10
    terrain_extent: tuple = (20.0, 20.0)
    terrain_cell: float = 0.1
    amplitude: float = 0.5
    sigma: float = 2.0
    noise_scale: float = 2.0
    placement_margin: float = 5.0
    flat_max_deg: float = 1.0
    slope_min_deg: float = 4.0
    slope_max_deg: float = 15.0
    heading_jitter_deg: float = 10.0
    view_half_width: float = 1.5
    ground_spacing: float = GROUND_SPACING
    rock_density: float = 600.0  # sparser than ROCK_DENSITY to keep 900 frames fast
    robot_height: float = 0.3
    approach: tuple = (4.0, 1.5)
    mu: float = 0.5
    arm_limit: float = ARM_LIMIT
    signal_len: int = 100

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _choose_site(terrain: HeightMap, terrain_type: str, rng, p: GenParams):
    """Rock position and push heading realizing ``terrain_type``, or None."""
    xmin, xmax, ymin, ymax = terrain.extent
    m = p.placement_margin
    cand = np.column_stack([rng.uniform(xmin + m, xmax - m, 400), rng.uniform(ymin + m, ymax - m, 400)])
    grad = terrain.gradient_at(cand[:, 0], cand[:, 1])
    gmag = np.linalg.norm(grad, axis=1)
    if terrain_type == "flat":
        ok = np.flatnonzero(gmag < math.tan(math.radians(p.flat_max_deg)))
    else:
        lo = math.tan(math.radians(p.slope_min_deg))
        hi = math.tan(math.radians(p.slope_max_deg))
        ok = np.flatnonzero((gmag >= lo) & (gmag <= hi))
    if len(ok) == 0:
        return None
    i = ok[0]
    jitter = math.radians(rng.uniform(-p.heading_jitter_deg, p.heading_jitter_deg))
    if terrain_type == "flat":
        heading = rng.uniform(-math.pi, math.pi)
    else:
        up = math.atan2(grad[i, 1], grad[i, 0])
        heading = up + jitter if terrain_type == "uphill" else up + math.pi + jitter
    return tuple(cand[i]), heading


def slope_along(terrain: HeightMap, x: float, y: float, heading: float) -> float:
    g = terrain.gradient_at(x, y)
    return math.atan(float(g[0] * math.cos(heading) + g[1] * math.sin(heading)))


@dataclass
class Experiment:
    spec: SceneSpec
    terrain: HeightMap
    rock: PointCloud  # placed, world frame
    f_max: float
    signal: ForceSignal


def make_experiment(seed: int, rock: RockSpec, terrain_type: str, p: GenParams = GenParams()) -> Experiment:
    """Build one push experiment: terrain, site, rotated rock, robot approach, force label."""
    rng = np.random.default_rng(seed)
    for _ in range(50):
        terrain = make_terrain(
            p.terrain_extent, p.terrain_cell, int(rng.integers(2**31 - 1)), p.amplitude, p.sigma, p.noise_scale
        )
        site = _choose_site(terrain, terrain_type, rng, p)
        if site is not None:
            break
    else:
        raise RuntimeError(f"no {terrain_type} site found for seed {seed}")
    (x, y), heading = site
    R = random_rotation(rng)
    cloud = make_rock(rock, R, p.rock_density, int(rng.integers(2**31 - 1)))
    placed, _ = place_rock(terrain, cloud, x, y)
    slope = slope_along(terrain, x, y, heading)
    d0, d1 = p.approach
    dists = np.linspace(d0, d1, p.frames) + rng.uniform(-0.1, 0.1, p.frames)
    lateral = rng.uniform(-0.2, 0.2, p.frames)
    spec = SceneSpec(seed, rock, R, (x, y), p.mu, heading, terrain_type, slope, tuple(dists), tuple(lateral))
    signal = force_oracle(rock.mass, slope, p.mu, p.arm_limit, p.signal_len)
    return Experiment(spec, terrain, placed, fmax(signal), signal)


def frame_cloud(exp: Experiment, frame: int, p: GenParams = GenParams()) -> PointCloud:
    """Scene sampled for one approach frame, in the robot frame."""
    spec = exp.spec
    x, y = spec.placement
    h = p.view_half_width
    region = (x - h, x + h, y - h, y + h)
    cloud = sample_scene(exp.terrain, [exp.rock], p.ground_spacing, seed=spec.seed * 1000 + frame, region=region)
    u = np.array([math.cos(spec.robot_heading), math.sin(spec.robot_heading)])
    perp = np.array([-u[1], u[0]])
    rxy = np.array([x, y]) - spec.robot_distances[frame] * u + spec.robot_lateral[frame] * perp
    rz = float(exp.terrain.height_at(rxy[0], rxy[1])) + p.robot_height
    return to_robot_frame(cloud, (rxy[0], rxy[1], rz), spec.robot_heading)


def balanced_schedule(n: int, rng: np.random.Generator) -> list:
    """Shuffled (rock, terrain) pairs cycling through every combination."""
    combos = [(r, t) for r in CATALOG for t in TERRAIN_TYPES]
    out = []
    while len(out) < n:
        block = [combos[i] for i in rng.permutation(len(combos))]
        out.extend(block)
    return out[:n]


def target_obstacle(analysis, labels):
    """Index of the extracted obstacle that holds most of the true rock points."""
    best, best_hits = None, 0
    for j, members in enumerate(analysis.segmentation.clusters):
        hits = int((labels[members] >= 0).sum())
        if hits > best_hits:
            best, best_hits = j, hits
    return best


def frame_records(exp: Experiment, run: int, p: GenParams = GenParams(), config=None) -> list:
    """One PushRecord per approach frame in which the rock is found and characterized."""
    from .config import PipelineConfig
    from .pipeline import analyze

    config = config or PipelineConfig()
    sig = exp.signal.magnitudes
    meta = {
        "run": run,
        "rock": exp.spec.rock.name,
        "terrain": exp.spec.terrain_type,
        "slope_deg": round(math.degrees(exp.spec.slope), 6),
        "signal_mean": float(sig.mean()),
        "signal_std": float(sig.std()),
        "signal_len": len(sig),
    }
    out = []
    for frame in range(p.frames):
        cloud = frame_cloud(exp, frame, p)
        analysis = analyze(cloud, config, with_verdicts=False)
        j = target_obstacle(analysis, cloud.labels)
        if j is None or analysis.obstacles[j].flags:
            log.warning("run %d frame %d: rock not recovered, frame skipped", run, frame)
            continue
        vec = feature_vector(analysis.obstacles[j])
        out.append(PushRecord(vec, exp.f_max, dict(meta, frame=frame)))
    return out


@dataclass
class Dataset:
    experiments: list
    records: list
    params: GenParams
    seed: int

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "n_experiments": len(self.experiments),
            "n_records": len(self.records),
            "params": self.params.to_dict(),
            "experiments": [e.spec.to_dict() | {"f_max": e.f_max} for e in self.experiments],
        }


def gen_dataset(n_experiments: int = 90, seed: int = 0, params: GenParams = GenParams(), config=None) -> Dataset:
    """Run ``n_experiments`` synthetic pushes and label every approach frame.

    Rock type and terrain class follow a seeded balanced schedule; each
    experiment gets its own derived seed so the whole output is a pure
    function of ``seed``.
    """
    if n_experiments < 1:
        raise ValueError("need at least one experiment")
    rng = np.random.default_rng(seed)
    schedule = balanced_schedule(n_experiments, rng)
    exp_seeds = rng.integers(0, 2**31 - 1, size=n_experiments)
    experiments, records = [], []
    for run, ((rock, terrain_type), s) in enumerate(zip(schedule, exp_seeds)):
        exp = make_experiment(int(s), rock, terrain_type, params)
        experiments.append(exp)
        records.extend(frame_records(exp, run, params, config))
    return Dataset(experiments, records, params, seed)
