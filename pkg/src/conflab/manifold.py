"""Background geometries: flat tori, Euclidean boxes and round spheres.

Each geometry supplies the exact base distance d0, ball volumes for the base
measure mu0, geodesic midpoints, covering lattices and uniform Monte Carlo
samples of balls.  Points are plain numpy vectors: chart coordinates for
torus/box, ambient unit vectors for the sphere (the sphere radius only scales
distances and volumes).  All operations are pure; randomness enters only
through explicit seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .errors import GeometryError, InputError, ResourceError
from .rng import derive_rng

DEFAULT_LATTICE_BUDGET = 2_000_000

# Nearest-neighbour spacing of the quasi-uniform sphere layouts is about
# sqrt(vol / (c * N)) per dimension; calibrated on the implemented layouts.
SPHERE_LAYOUT_CONSTANT = {2: 0.85, 3: 0.55, 4: 0.35}


def unit_ball_volume(n: int) -> float:
    """Euclidean volume of the unit n-ball."""
    return pi ** (n / 2.0) / gamma(n / 2.0 + 1.0)


def sphere_volume(n: int) -> float:
    """Riemannian volume of the unit round n-sphere."""
    return 2.0 * pi ** ((n + 1) / 2.0) / gamma((n + 1) / 2.0)


@dataclass(frozen=True)
class Manifold:
    """Background geometry descriptor (torus, box or sphere)."""

    kind: str
    dim: int
    periods: Optional[np.ndarray] = None
    extents: Optional[np.ndarray] = None
    radius: float = 1.0

    @staticmethod
    def torus(dim: int = 2, periods=None) -> "Manifold":
        if dim < 2:
            raise InputError(f"torus dimension must be >= 2, got {dim}")
        p = np.full(dim, 2 * pi) if periods is None else np.asarray(periods, dtype=float)
        if p.shape != (dim,) or np.any(p <= 0):
            raise InputError("torus periods must be a positive vector of length dim")
        return Manifold("torus", dim, periods=p)

    @staticmethod
    def box(extents) -> "Manifold":
        e = np.asarray(extents, dtype=float)
        if e.ndim != 2 or e.shape[1] != 2 or e.shape[0] < 2:
            raise InputError("box extents must be an (n, 2) array with n >= 2")
        if np.any(e[:, 1] <= e[:, 0]):
            raise InputError("box extents must have hi > lo on every axis")
        return Manifold("box", e.shape[0], extents=e)

    @staticmethod
    def sphere(dim: int = 2, radius: float = 1.0) -> "Manifold":
        if dim not in (2, 3, 4):
            raise InputError(f"sphere dimension must be in {{2,3,4}}, got {dim}")
        if radius <= 0:
            raise InputError("sphere radius must be positive")
        return Manifold("sphere", dim, radius=float(radius))

    # -- basic attributes ------------------------------------------------

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1 if self.kind == "sphere" else self.dim

    @property
    def volume(self) -> float:
        if self.kind == "torus":
            return float(np.prod(self.periods))
        if self.kind == "box":
            return float(np.prod(self.extents[:, 1] - self.extents[:, 0]))
        return sphere_volume(self.dim) * self.radius**self.dim

    @property
    def max_distance(self) -> float:
        """Diameter of the manifold for d0."""
        if self.kind == "torus":
            return float(np.linalg.norm(self.periods / 2.0))
        if self.kind == "box":
            return float(np.linalg.norm(self.extents[:, 1] - self.extents[:, 0]))
        return pi * self.radius

    @property
    def min_period(self) -> float:
        if self.kind == "torus":
            return float(np.min(self.periods))
        if self.kind == "box":
            return float(np.min(self.extents[:, 1] - self.extents[:, 0]))
        return pi * self.radius

    # -- point handling --------------------------------------------------

    def check_points(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.ambient_dim:
            raise InputError(
                f"point dimension {x.shape[-1]} does not match manifold "
                f"ambient dimension {self.ambient_dim}"
            )
        if not np.all(np.isfinite(x)):
            raise InputError("points must have finite coordinates")
        if self.kind == "sphere":
            nrm = np.linalg.norm(x, axis=-1)
            if np.any(np.abs(nrm - 1.0) > 1e-12):
                raise InputError("sphere points must be unit vectors (|1 - |x|| <= 1e-12)")
        return x

    def canonicalize(self, x: np.ndarray) -> np.ndarray:
        """Canonical representative: wrap torus coords into [0, period)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "torus":
            return np.mod(x, self.periods)
        if self.kind == "sphere":
            return x / np.linalg.norm(x, axis=-1, keepdims=True)
        return x


@dataclass(frozen=True)
class PointSet:
    """Ordered point collection with its generation spacing and cell volumes."""

    points: np.ndarray
    spacing: float
    cell_volume: np.ndarray = field(default=None)  # per-point quadrature cell
    lattice_shape: Optional[tuple] = None
    axis_spacing: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class BallSpec:
    """Geodesic ball for d0: center point and radius in d0 units."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise InputError("ball radius must be positive")


def whole_manifold_ball(m: Manifold) -> BallSpec:
    """Ball that covers the entire manifold (averages over all of M)."""
    if m.kind == "torus":
        center = np.zeros(m.dim)
    elif m.kind == "box":
        center = m.extents.mean(axis=1)
    else:
        center = np.zeros(m.dim + 1)
        center[-1] = 1.0
    return BallSpec(center=center, radius=m.max_distance * (1 + 1e-9))


# ---------------------------------------------------------------------------
# distance
# ---------------------------------------------------------------------------


def torus_delta(m: Manifold, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minimal representative of y - x, entries in [-p/2, p/2).

    The wrap chooses -p/2 on cut-locus ties, which is the lexicographically
    smallest translate; documented for reproducibility.
    """
    return np.mod(y - x + m.periods / 2.0, m.periods) - m.periods / 2.0


def _sphere_angle(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # 2*arcsin of half-chord; switch to the antipodal form for obtuse angles
    # so accuracy is ~1e-15 over the whole range (plain arccos loses digits).
    dot = np.sum(x * y, axis=-1)
    chord = np.linalg.norm(x - y, axis=-1)
    anti = np.linalg.norm(x + y, axis=-1)
    near = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
    far = pi - 2.0 * np.arcsin(np.clip(anti / 2.0, 0.0, 1.0))
    return np.where(dot >= 0.0, near, far)


def d0_many(m: Manifold, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Elementwise d0 between broadcast-compatible point arrays."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if m.kind == "torus":
        return np.linalg.norm(torus_delta(m, x, y), axis=-1)
    if m.kind == "box":
        return np.linalg.norm(y - x, axis=-1)
    return m.radius * _sphere_angle(x, y)


def d0(m: Manifold, x, y) -> float:
    """Base distance between two points."""
    x = m.check_points(x)[0]
    y = m.check_points(y)[0]
    return float(d0_many(m, x, y))


def midpoint(m: Manifold, x, y) -> np.ndarray:
    """Point at distance d0(x,y)/2 from both ends of a minimizing geodesic."""
    x = m.check_points(x)[0]
    y = m.check_points(y)[0]
    if np.array_equal(x, y):
        raise GeometryError("midpoint requires two distinct points")
    if m.kind == "torus":
        return m.canonicalize(x + 0.5 * torus_delta(m, x, y))
    if m.kind == "box":
        return 0.5 * (x + y)
    if d0_many(m, x, y) >= pi * m.radius - 1e-9:
        raise GeometryError("midpoint of (nearly) antipodal sphere points is ambiguous")
    mid = x + y
    return mid / np.linalg.norm(mid)


def geodesic_points(m: Manifold, x: np.ndarray, y: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Points gamma(t) on the minimizing geodesic x -> y, for t in [0,1].

    Vectorized over an (E, d) batch of segments; returns (T, E, d).
    """
    ts = np.asarray(ts, dtype=float)[:, None, None]
    if m.kind == "torus":
        delta = torus_delta(m, x, y)
        return np.mod(x[None] + ts * delta[None], m.periods)
    if m.kind == "box":
        return x[None] + ts * (y - x)[None]
    ang = _sphere_angle(x, y)[None, :, None]
    s = np.sin(ang)
    safe = np.where(s < 1e-14, 1.0, s)
    a = np.where(s < 1e-14, 1.0 - ts, np.sin((1.0 - ts) * ang) / safe)
    b = np.where(s < 1e-14, ts, np.sin(ts * ang) / safe)
    g = a * x[None] + b * y[None]
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# ball volumes
# ---------------------------------------------------------------------------


def cap_volume(m: Manifold, r: float) -> float:
    """Volume of a geodesic cap of radius r on the round sphere.

    vol = vol(S^{n-1}) * R^n * int_0^{r/R} sin(t)^{n-1} dt, by adaptive
    quadrature (relative tolerance ~1e-12, so A-infinity denominators are
    noise free).
    """
    n = m.dim
    theta = min(r / m.radius, pi)
    if theta <= 0:
        return 0.0
    val, _ = quad(lambda t: np.sin(t) ** (n - 1), 0.0, theta, epsabs=0.0, epsrel=1e-12)
    return sphere_volume(n - 1) * m.radius**n * val


def mu0_ball_detail(m: Manifold, b: BallSpec, budget: int = 200_000, seed: int = 0):
    """(volume, standard error) of mu0(B); exact branches report zero error."""
    r = b.radius
    if m.kind == "sphere":
        return cap_volume(m, r), 1e-12 * cap_volume(m, r)
    if m.kind == "torus" and r < m.min_period / 2.0:
        return unit_ball_volume(m.dim) * r**m.dim, 0.0
    if m.kind == "box":
        c = np.asarray(b.center, dtype=float)
        inside = np.all((c - m.extents[:, 0] >= r) & (m.extents[:, 1] - c >= r))
        if inside:
            return unit_ball_volume(m.dim) * r**m.dim, 0.0
    if r >= m.max_distance:
        return m.volume, 0.0
    pts, _ = sample_manifold(m, budget, seed)
    frac = float(np.mean(d0_many(m, pts, b.center) <= r))
    vol = m.volume * frac
    se = m.volume * np.sqrt(max(frac * (1 - frac), 1e-300) / budget)
    return vol, se


def mu0_ball(m: Manifold, b: BallSpec, budget: int = 200_000, seed: int = 0) -> float:
    """Base-measure volume of a geodesic ball."""
    return mu0_ball_detail(m, b, budget, seed)[0]


# ---------------------------------------------------------------------------
# lattices
# ---------------------------------------------------------------------------


def _grid_axes(m: Manifold, spacing: float, cover: bool = False):
    round_up = (lambda v: int(np.ceil(v - 1e-9))) if cover else (lambda v: int(round(v)))
    axes, actual = [], []
    if m.kind == "torus":
        for p in m.periods:
            k = max(1, round_up(p / spacing))
            axes.append(np.arange(k) * (p / k))
            actual.append(p / k)
    else:
        for lo, hi in m.extents:
            k = max(1, round_up((hi - lo) / spacing) if cover else int(np.floor((hi - lo) / spacing + 1e-9)))
            axes.append(np.linspace(lo, hi, k + 1))
            actual.append((hi - lo) / k)
    return axes, np.asarray(actual)


def _fibonacci_sphere(count: int) -> np.ndarray:
    golden = (1 + np.sqrt(5.0)) / 2
    i = np.arange(count)
    z = 1.0 - (2.0 * i + 1.0) / count
    phi = 2 * pi * np.mod(i / golden, 1.0)
    s = np.sqrt(np.clip(1 - z * z, 0.0, 1.0))
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


def _sin_power_ppf(power: int, u: np.ndarray, theta_max: float = pi) -> np.ndarray:
    """Inverse CDF of density sin(t)^power on [0, theta_max], by table lookup."""
    if power == 0:
        return u * theta_max
    if power == 1:
        lo = 1.0
        hi = np.cos(theta_max)
        return np.arccos(np.clip(lo + (hi - lo) * u, -1.0, 1.0))
    t = np.linspace(0.0, theta_max, 4097)
    dens = np.sin(t) ** power
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(t))])
    cdf /= cdf[-1]
    return np.interp(u, cdf, t)


def _kronecker_sequence(count: int, dims: int) -> np.ndarray:
    # generalized golden-ratio (R_d) low-discrepancy sequence in [0,1)^dims
    g = 2.0
    for _ in range(32):
        g = (1 + g) ** (1.0 / (dims + 1))
    alpha = np.array([(1.0 / g) ** (k + 1) for k in range(dims)])
    return np.mod(np.outer(np.arange(1, count + 1), alpha) + 0.5, 1.0)


def _quasi_uniform_sphere(n: int, count: int) -> np.ndarray:
    """Quasi-uniform points on S^n.

    S^2 uses the golden spiral; higher spheres start from a low-discrepancy
    set in area-preserving spherical coordinates and even out the
    nearest-neighbour spacing with deterministic repulsion sweeps.
    """
    if n == 2:
        return _fibonacci_sphere(count)
    u = _kronecker_sequence(count, n)
    # colatitudes with densities sin^{n-1}, sin^{n-2}, ..., final azimuth uniform
    angles = [_sin_power_ppf(n - 1 - j, u[:, j]) for j in range(n - 1)]
    phi = 2 * pi * u[:, n - 1]
    coords = []
    sin_prod = np.ones(count)
    for th in angles:
        coords.append(sin_prod * np.cos(th))
        sin_prod = sin_prod * np.sin(th)
    coords.append(sin_prod * np.cos(phi))
    coords.append(sin_prod * np.sin(phi))
    x = np.column_stack(coords[::-1])
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return _repel_sphere_points(x)


def _repel_sphere_points(x: np.ndarray, sweeps: int = 60) -> np.ndarray:
    from scipy.spatial import cKDTree

    count = x.shape[0]
    target = (sphere_volume(x.shape[1] - 1) / count) ** (1.0 / (x.shape[1] - 1))
    for sweep in range(sweeps):
        tree = cKDTree(x)
        dist, idx = tree.query(x, k=5)
        step = np.zeros_like(x)
        for k in range(1, 5):
            d = dist[:, k]
            close = d < target
            if not np.any(close):
                continue
            push = (x[close] - x[idx[close, k]]) / d[close, None]
            step[close] += push * ((target - d[close]) / 2)[:, None]
        if not step.any():
            break
        x = x + 0.5 * step
        x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x


def lattice(
    m: Manifold, spacing: float, budget: int = DEFAULT_LATTICE_BUDGET, cover: bool = False
) -> PointSet:
    """Covering point set with the requested spacing.

    Torus/box: axis-aligned grid (torus spacing adjusted to divide each
    period; ``cover=True`` rounds the counts up so the realized spacing never
    exceeds the request).  Sphere: quasi-uniform layout with
    nearest-neighbour spacing within [0.5, 2] of the request.
    """
    if spacing <= 0:
        raise InputError("lattice spacing must be positive")
    if m.kind in ("torus", "box"):
        axes, actual = _grid_axes(m, spacing, cover=cover)
        shape = tuple(len(a) for a in axes)
        npts = int(np.prod([float(s) for s in shape]))
        if npts > budget:
            raise ResourceError(
                f"lattice would need {npts} points, exceeding the budget of {budget}"
            )
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=-1)
        cell = float(np.prod(actual))
        return PointSet(
            points=pts,
            spacing=float(np.max(actual)),
            cell_volume=np.full(npts, cell),
            lattice_shape=shape,
            axis_spacing=actual,
        )
    c = SPHERE_LAYOUT_CONSTANT[m.dim]
    count = max(m.dim + 2, int(round(m.volume / (c * spacing**m.dim))))
    if count > budget:
        raise ResourceError(
            f"lattice would need {count} points, exceeding the budget of {budget}"
        )
    pts = _quasi_uniform_sphere(m.dim, count)
    return PointSet(
        points=pts,
        spacing=float(spacing),
        cell_volume=np.full(count, m.volume / count),
    )


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample_manifold(m: Manifold, count: int, seed: int = 0):
    """(points, weights): i.i.d. uniform w.r.t. mu0 over all of M."""
    rng = derive_rng(seed, "manifold")
    if m.kind == "torus":
        pts = rng.random((count, m.dim)) * m.periods
    elif m.kind == "box":
        lo, hi = m.extents[:, 0], m.extents[:, 1]
        pts = lo + rng.random((count, m.dim)) * (hi - lo)
    else:
        g = rng.standard_normal((count, m.dim + 1))
        pts = g / np.linalg.norm(g, axis=1, keepdims=True)
    w = np.full(count, m.volume / count)
    return pts, w


def _householder_to(center: np.ndarray) -> np.ndarray:
    """Orthogonal map taking the last basis vector to the unit vector center."""
    d = center.shape[0]
    e = np.zeros(d)
    e[-1] = 1.0
    if np.allclose(center, -e):
        h = -np.eye(d)
        h[0, 0] = 1.0  # any rotation with e -> -e will do
        return h
    v = e + center
    v = v / np.linalg.norm(v)
    return 2.0 * np.outer(v, v) - np.eye(d)


def _sample_cap(m: Manifold, b: BallSpec, count: int, rng) -> np.ndarray:
    n = m.dim
    theta_max = min(b.radius / m.radius, pi)
    theta = _sin_power_ppf(n - 1, rng.random(count), theta_max)
    g = rng.standard_normal((count, n))
    u = g / np.linalg.norm(g, axis=1, keepdims=True)
    local = np.concatenate(
        [np.sin(theta)[:, None] * u, np.cos(theta)[:, None]], axis=1
    )
    hh = _householder_to(np.asarray(b.center, dtype=float))
    return local @ hh.T


def sample_ball(m: Manifold, b: BallSpec, count: int, seed: int = 0):
    """(points, weights): i.i.d. uniform samples of B w.r.t. mu0.

    Weights are uniform and sum to mu0_ball(b).  Torus/box use rejection from
    a chart box, the sphere samples caps directly by colatitude inversion and
    a rotation; the output is deterministic given the seed.
    """
    if count < 1:
        raise InputError("sample count must be >= 1")
    rng = derive_rng(seed, "ball")
    vol = mu0_ball(m, b, seed=seed)
    if m.kind == "sphere":
        pts = _sample_cap(m, b, count, rng)
        return pts, np.full(count, vol / count)
    c = np.asarray(b.center, dtype=float)
    if m.kind == "torus":
        half = np.minimum(b.radius, m.periods / 2.0)
        lo, hi = c - half, c + half
    else:
        lo = np.maximum(c - b.radius, m.extents[:, 0])
        hi = np.minimum(c + b.radius, m.extents[:, 1])
    out = np.empty((count, m.dim))
    got, drawn = 0, 0
    while got < count:
        batch = max(count - got, 1024)
        cand = lo + rng.random((batch, m.dim)) * (hi - lo)
        keep = cand[d0_many(m, cand, c) <= b.radius]
        take = min(count - got, keep.shape[0])
        out[got : got + take] = keep[:take]
        got += take
        drawn += batch
        if drawn > 4096 and got / drawn < 1e-3:
            raise ResourceError(
                f"ball rejection efficiency {got / drawn:.2e} below 1e-3"
            )
    if m.kind == "torus":
        out = m.canonicalize(out)
    return out, np.full(count, vol / count)
