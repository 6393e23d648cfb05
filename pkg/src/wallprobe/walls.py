"""Wall geometries, the enumerated wall dataset, and their rasterisation.

Every wall spans ``x in [-1, 1]`` m and starts at the front face ``y = 1.0`` m,
extending towards +y. Geometry is evaluated point-wise (no sub-cell averaging),
both on FDTD nodes and on the centres of the 32x32 target profile.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import GeometryError, InvalidArgument, ParseError
from .fdtd import GridSpec, MediumGrid

WALL_FRONT_Y = 1.0
WALL_LENGTH = 2.0
AIRGAP_EDGE = 0.10

PROFILE_SHAPE = (32, 32)
PROFILE_X = (-1.0, 1.0)
PROFILE_Y = (1.0, 1.8)

WALL_KINDS = ("homo", "ylayer", "xlayer", "airgap")


def _check_positive(name, value):
    if not value > 0:
        raise GeometryError(f"{name} must be positive, got {value}")


def _check_eps(name, value):
    if not value >= 1.0:
        raise GeometryError(f"{name} must be >= 1, got {value}")


class _Wall:
    """Shared behaviour of the four wall types.

    Subclasses define ``kind``, ``thickness`` and ``_eps_at(x, y)`` which
    returns the relative permittivity at points inside the wall's bounding
    box (air gaps give 1).
    """

    kind = ""
    sigma: float

    def bounds(self):
        x_lo = -WALL_LENGTH / 2
        return x_lo, x_lo + WALL_LENGTH, WALL_FRONT_Y, WALL_FRONT_Y + self.thickness

    def material(self, x, y):
        """(eps_r, sigma, solid mask) of the wall at broadcastable point arrays."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        x0, x1, y0, y1 = self.bounds()
        inside = (x >= x0) & (x < x1) & (y >= y0) & (y < y1)
        eps = np.ones(x.shape)
        eps[inside] = self._eps_at(x[inside], y[inside])
        solid = inside & (eps != 1.0)
        sig = np.where(solid, self.sigma, 0.0)
        return eps, sig, solid

    def to_line(self):
        parts = [self.kind] + [f"{f.name}={getattr(self, f.name)!r}" for f in fields(self)]
        return ",".join(parts)

    def in_table_range(self):
        return _table_check(self)


@dataclass(frozen=True)
class Homogeneous(_Wall):
    eps_r: float
    th: float
    sigma: float = 0.0
    kind = "homo"

    def __post_init__(self):
        _check_eps("eps_r", self.eps_r)
        _check_positive("th", self.th)
        _check_sigma(self.sigma)

    @property
    def thickness(self):
        return self.th

    def _eps_at(self, x, y):
        return np.full(x.shape, float(self.eps_r))


@dataclass(frozen=True)
class YLayered(_Wall):
    """Three layers stacked along y: outer ``d1`` layers of ``eps_r1`` around a ``d2`` core."""

    eps_r1: float
    eps_r2: float
    d1: float
    d2: float
    sigma: float = 0.0
    kind = "ylayer"

    def __post_init__(self):
        _check_eps("eps_r1", self.eps_r1)
        _check_eps("eps_r2", self.eps_r2)
        _check_positive("d1", self.d1)
        _check_positive("d2", self.d2)
        _check_sigma(self.sigma)
        if not self.eps_r2 > self.eps_r1:
            raise GeometryError("YLayered needs eps_r2 > eps_r1")

    @property
    def thickness(self):
        return 2 * self.d1 + self.d2

    def _eps_at(self, x, y):
        u = y - WALL_FRONT_Y
        core = (u >= self.d1) & (u < self.d1 + self.d2)
        return np.where(core, float(self.eps_r2), float(self.eps_r1))


@dataclass(frozen=True)
class XLayered(_Wall):
    """Three bands along x: a central ``l2`` band of ``eps_r2`` between ``eps_r1`` ends."""

    eps_r1: float
    eps_r2: float
    l2: float
    th: float
    sigma: float = 0.0
    kind = "xlayer"

    def __post_init__(self):
        _check_eps("eps_r1", self.eps_r1)
        _check_eps("eps_r2", self.eps_r2)
        _check_positive("th", self.th)
        _check_sigma(self.sigma)
        if not 0 < self.l2 < WALL_LENGTH:
            raise GeometryError(f"l2 must lie in (0, {WALL_LENGTH}), got {self.l2}")
        if not self.eps_r2 > self.eps_r1:
            raise GeometryError("XLayered needs eps_r2 > eps_r1")

    @property
    def thickness(self):
        return self.th

    @property
    def l1(self):
        return (WALL_LENGTH - self.l2) / 2

    def _eps_at(self, x, y):
        centre = (x >= -self.l2 / 2) & (x < self.l2 / 2)
        return np.where(centre, float(self.eps_r2), float(self.eps_r1))


@dataclass(frozen=True)
class AirGap(_Wall):
    """Solid wall with ``n_gaps`` equal rectangular voids.

    ``edge`` of solid material separates the voids from the front face, the
    back face, the wall ends and each other.
    """

    eps_r: float
    th: float
    n_gaps: int
    sigma: float = 0.0
    edge: float = AIRGAP_EDGE
    kind = "airgap"

    def __post_init__(self):
        _check_eps("eps_r", self.eps_r)
        _check_positive("th", self.th)
        _check_sigma(self.sigma)
        if int(self.n_gaps) != self.n_gaps or self.n_gaps < 1:
            raise GeometryError(f"n_gaps must be a positive integer, got {self.n_gaps}")
        if self.gap_width <= 0:
            raise GeometryError(f"{self.n_gaps} gaps with edge {self.edge} do not fit in the wall")
        if self.th < 2 * self.edge:
            raise GeometryError(f"th={self.th} thinner than the two {self.edge} m shells")

    @property
    def thickness(self):
        return self.th

    @property
    def gap_width(self):
        return (WALL_LENGTH - (self.n_gaps + 1) * self.edge) / self.n_gaps

    def gaps(self):
        """List of (x0, x1, y0, y1) void rectangles (empty when the depth is zero)."""
        y0 = WALL_FRONT_Y + self.edge
        y1 = WALL_FRONT_Y + self.th - self.edge
        if y1 <= y0:
            return []
        w = self.gap_width
        out = []
        for k in range(int(self.n_gaps)):
            x0 = -WALL_LENGTH / 2 + self.edge + k * (w + self.edge)
            out.append((x0, x0 + w, y0, y1))
        return out

    def _eps_at(self, x, y):
        eps = np.full(x.shape, float(self.eps_r))
        for x0, x1, y0, y1 in self.gaps():
            eps[(x >= x0) & (x < x1) & (y >= y0) & (y < y1)] = 1.0
        return eps


def _check_sigma(sigma):
    if not sigma >= 0:
        raise InvalidArgument(f"sigma must be >= 0, got {sigma}")


WALL_TYPES = {cls.kind: cls for cls in (Homogeneous, YLayered, XLayered, AirGap)}
WallSpec = Homogeneous | YLayered | XLayered | AirGap


def parse_wall(line: str):
    """Inverse of ``spec.to_line()``: ``kind,param=value,...``."""
    parts = line.strip().split(",")
    cls = WALL_TYPES.get(parts[0])
    if cls is None:
        raise ParseError(f"unknown wall type {parts[0]!r}")
    kwargs = {}
    for item in parts[1:]:
        key, sep, value = item.partition("=")
        if not sep:
            raise ParseError(f"malformed wall parameter {item!r}")
        try:
            kwargs[key] = int(value) if key == "n_gaps" else float(value)
        except ValueError:
            raise ParseError(f"non-numeric wall parameter {item!r}") from None
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ParseError(f"bad parameters for {parts[0]}: {exc}") from None


@dataclass(frozen=True)
class TargetSpec:
    """Rectangular dielectric target placed behind the wall."""

    center: tuple
    width: float
    height: float
    eps_r: float

    def __post_init__(self):
        if self.width < 0 or self.height < 0:
            raise GeometryError("target size must be non-negative")
        _check_eps("target eps_r", self.eps_r)
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def bounds(self):
        cx, cy = self.center
        return (cx - self.width / 2, cx + self.width / 2, cy - self.height / 2, cy + self.height / 2)

    def mask(self, x, y):
        x0, x1, y0, y1 = self.bounds()
        return (x >= x0) & (x < x1) & (y >= y0) & (y < y1)


# --- dataset enumeration ---------------------------------------------------

def _steps(lo, hi, n):
    return tuple(round(float(v), 6) for v in np.linspace(lo, hi, n))


@dataclass(frozen=True)
class DatasetGrid:
    """Parameter values of the enumerated wall dataset, one tuple per axis."""

    homo_eps: tuple = _steps(3.0, 8.0, 26)
    homo_th: tuple = _steps(0.10, 0.50, 5)
    y_eps2: tuple = _steps(4.0, 8.0, 5)
    y_eps1: tuple = _steps(2.0, 3.0, 3)
    y_d2: tuple = _steps(0.10, 0.30, 5)
    y_d1: tuple = _steps(0.05, 0.15, 3)
    x_eps2: tuple = _steps(4.0, 8.0, 5)
    x_eps1: tuple = _steps(2.0, 3.0, 3)
    x_l2: tuple = _steps(0.60, 0.80, 3)
    x_th: tuple = _steps(0.10, 0.50, 5)
    gap_eps: tuple = _steps(3.0, 8.0, 26)
    gap_th: tuple = _steps(0.20, 0.50, 4)
    gap_n: tuple = (2, 3, 4)


TABLE_I = DatasetGrid()

_RANGES = {
    "homo": dict(eps_r=(3, 8), th=(0.10, 0.50)),
    "ylayer": dict(eps_r1=(2, 3), eps_r2=(4, 8), d1=(0.05, 0.15), d2=(0.10, 0.30)),
    "xlayer": dict(eps_r1=(2, 3), eps_r2=(4, 8), l2=(0.60, 0.80), th=(0.10, 0.50)),
    "airgap": dict(eps_r=(3, 8), th=(0.20, 0.50), n_gaps=(2, 4)),
}


def _table_check(spec):
    tol = 1e-9
    for name, (lo, hi) in _RANGES[spec.kind].items():
        v = getattr(spec, name)
        if not lo - tol <= v <= hi + tol:
            return False
    if spec.kind == "airgap" and abs(spec.edge - AIRGAP_EDGE) > tol:
        return False
    return True


def enumerate_dataset(grid: DatasetGrid = TABLE_I, kinds=WALL_KINDS):
    """Deterministic list of wall specs, grouped by type in ``WALL_KINDS`` order."""
    out = []
    if "homo" in kinds:
        out += [Homogeneous(e, t) for e, t in itertools.product(grid.homo_eps, grid.homo_th)]
    if "ylayer" in kinds:
        out += [YLayered(eps_r1=e1, eps_r2=e2, d1=d1, d2=d2) for e2, e1, d2, d1
                in itertools.product(grid.y_eps2, grid.y_eps1, grid.y_d2, grid.y_d1)]
    if "xlayer" in kinds:
        out += [XLayered(eps_r1=e1, eps_r2=e2, l2=l2, th=th) for e2, e1, l2, th
                in itertools.product(grid.x_eps2, grid.x_eps1, grid.x_l2, grid.x_th)]
    if "airgap" in kinds:
        out += [AirGap(e, t, n) for e, t, n in itertools.product(grid.gap_eps, grid.gap_th, grid.gap_n)]
    return out


def case_ids(specs):
    """Stable identifiers ``<kind>-<index within kind>``."""
    counters = {}
    ids = []
    for spec in specs:
        k = counters.get(spec.kind, 0)
        counters[spec.kind] = k + 1
        ids.append(f"{spec.kind}-{k:04d}")
    return ids


# --- rasterisation ---------------------------------------------------------

def profile_centers(shape=PROFILE_SHAPE, x_extent=PROFILE_X, y_extent=PROFILE_Y):
    """(xc, yc) pixel-centre coordinates; ``yc`` indexes rows, ``xc`` columns."""
    ny, nx = shape
    xc = x_extent[0] + (np.arange(nx) + 0.5) * (x_extent[1] - x_extent[0]) / nx
    yc = y_extent[0] + (np.arange(ny) + 0.5) * (y_extent[1] - y_extent[0]) / ny
    return xc, yc


@dataclass(frozen=True, eq=False)
class DielectricProfile:
    """Relative permittivity image, ``values[row, col]`` with row along +y and col along +x."""

    values: np.ndarray
    x_extent: tuple = PROFILE_X
    y_extent: tuple = PROFILE_Y

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise InvalidArgument(f"profile must be 2D, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, DielectricProfile):
            return NotImplemented
        return (self.x_extent == other.x_extent and self.y_extent == other.y_extent
                and np.array_equal(self.values, other.values))


def rasterize_profile(spec, shape=PROFILE_SHAPE) -> DielectricProfile:
    xc, yc = profile_centers(shape)
    eps, _, _ = spec.material(xc[None, :], yc[:, None])
    return DielectricProfile(eps)


def rasterize_medium(spec, grid: GridSpec, target: TargetSpec | None = None) -> MediumGrid:
    x0, x1, y0, y1 = spec.bounds()
    gx0, gx1, gy0, gy1 = grid.interior
    if x0 < gx0 or x1 > gx1 or y0 < gy0 or y1 > gy1:
        raise GeometryError(f"wall {spec.to_line()} extends outside the non-PML region")
    X, Y = grid.x[:, None], grid.y[None, :]
    eps, sig, _ = spec.material(X, Y)
    if target is not None and target.width > 0 and target.height > 0:
        tx0, tx1, ty0, ty1 = target.bounds()
        if ty0 < y1 or not (tx0 >= gx0 and tx1 <= gx1 and ty1 <= gy1):
            raise GeometryError("target must sit behind the wall inside the non-PML region")
        m = target.mask(X, Y)
        eps = np.where(m, target.eps_r, eps)
        sig = np.where(m, 0.0, sig)
    return MediumGrid(eps, sig)


def sample_medium_at_profile(medium: MediumGrid, grid: GridSpec, shape=PROFILE_SHAPE):
    """Nearest-node sampling of ``medium.eps_r`` at the profile pixel centres."""
    xc, yc = profile_centers(shape)
    ix = np.rint((xc - grid.x0) / grid.dx).astype(int)
    iy = np.rint((yc - grid.y0) / grid.dx).astype(int)
    return DielectricProfile(medium.eps_r[np.ix_(ix, iy)].T)
