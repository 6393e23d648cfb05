"""2D TMz finite-difference time-domain solver (Ez, Hx, Hy).

The grid is node-centred on Ez: node ``(i, j)`` sits at
``(x0 + i*dx, y0 + j*dx)``. Hx lives at ``(i, j + 1/2)`` and Hy at
``(i + 1/2, j)``. A convolutional PML with polynomial grading absorbs
outgoing waves on all four edges; the outermost Ez nodes are PEC.

Arrays are indexed ``[ix, iy]`` throughout this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, GeometryError, InvalidArgument, StabilityError

C0 = 299792458.0
MU0 = 4e-7 * math.pi
EPS0 = 1.0 / (MU0 * C0**2)
ETA0 = MU0 * C0

F0 = 2.4e9
LAMBDA_C = C0 / F0
DEFAULT_DT = 0.02e-9
DEFAULT_STEPS = 1075  # 21.5 ns at 0.02 ns

#: physical extent of the simulated scene, excluding the PML
CORE_X = (-1.25, 1.25)
CORE_Y = (-0.25, 2.25)

PML_ORDER = 3
PML_KAPPA_MAX = 1.0
PML_ALPHA_MAX = 0.05


@dataclass(frozen=True)
class GridSpec:
    dx: float
    dt: float
    nx: int
    ny: int
    x0: float
    y0: float
    pml_cells: int

    def __post_init__(self):
        if not (self.dx > 0 and self.dt > 0):
            raise InvalidArgument(f"dx and dt must be positive, got dx={self.dx}, dt={self.dt}")
        if self.nx < 2 * self.pml_cells + 3 or self.ny < 2 * self.pml_cells + 3:
            raise InvalidArgument("grid too small for its PML")
        if self.pml_cells < 0:
            raise InvalidArgument("pml_cells must be non-negative")

    @classmethod
    def default(cls, dx=None, dt=None, pml_cells=None, core_x=CORE_X, core_y=CORE_Y):
        """Build the standard scene grid with node ``(0, 0)`` on a lattice point.

        x is laid out symmetrically about 0 so mirror-symmetric scenes give
        mirror-symmetric fields.
        """
        dx = LAMBDA_C / 10 if dx is None else float(dx)
        dt = DEFAULT_DT if dt is None else float(dt)
        if pml_cells is None:
            pml_cells = math.ceil(2 * LAMBDA_C / dx - 1e-9)
        half_x = math.ceil(max(-core_x[0], core_x[1]) / dx - 1e-9)
        j_lo = math.floor(core_y[0] / dx + 1e-9)
        j_hi = math.ceil(core_y[1] / dx - 1e-9)
        nx = 2 * (half_x + pml_cells) + 1
        ny = (j_hi - j_lo) + 1 + 2 * pml_cells
        return cls(dx=dx, dt=dt, nx=nx, ny=ny, x0=-(half_x + pml_cells) * dx,
                   y0=(j_lo - pml_cells) * dx, pml_cells=pml_cells)

    def refined(self, factor=2):
        """Same scene with cell size and step divided by ``factor``."""
        xmin, xmax, ymin, ymax = self.interior
        return GridSpec.default(dx=self.dx / factor, dt=self.dt / factor, pml_cells=self.pml_cells * factor,
                                core_x=(xmin, xmax), core_y=(ymin, ymax))

    @property
    def x(self):
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def y(self):
        return self.y0 + self.dx * np.arange(self.ny)

    @property
    def interior(self):
        """(xmin, xmax, ymin, ymax) of the non-PML region."""
        p = self.pml_cells
        return (self.x0 + p * self.dx, self.x0 + (self.nx - 1 - p) * self.dx,
                self.y0 + p * self.dx, self.y0 + (self.ny - 1 - p) * self.dx)

    def contains(self, x, y, margin=0.0):
        xmin, xmax, ymin, ymax = self.interior
        return (xmin + margin <= x <= xmax - margin) and (ymin + margin <= y <= ymax - margin)


def check_courant(grid: GridSpec) -> bool:
    """True iff ``dt < dx / (c*sqrt(2))``."""
    if not (grid.dx > 0 and grid.dt > 0):
        raise InvalidArgument("dx and dt must be positive")
    return grid.dt < grid.dx / (C0 * math.sqrt(2.0))


@dataclass(frozen=True, eq=False)
class MediumGrid:
    eps_r: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        eps = np.asarray(self.eps_r, dtype=np.float64)
        sig = np.asarray(self.sigma, dtype=np.float64)
        if eps.shape != sig.shape or eps.ndim != 2:
            raise InvalidArgument(f"eps_r {eps.shape} and sigma {sig.shape} must be equal 2D shapes")
        if not np.all(np.isfinite(eps)) or np.any(eps < 1.0):
            raise InvalidArgument("eps_r must be finite and >= 1 everywhere")
        if not np.all(np.isfinite(sig)) or np.any(sig < 0.0):
            raise InvalidArgument("sigma must be finite and >= 0 everywhere")
        object.__setattr__(self, "eps_r", eps)
        object.__setattr__(self, "sigma", sig)

    @classmethod
    def free_space(cls, grid: GridSpec):
        return cls(np.ones((grid.nx, grid.ny)), np.zeros((grid.nx, grid.ny)))

    @property
    def shape(self):
        return self.eps_r.shape

    def is_free_space(self):
        return bool(np.all(self.eps_r == 1.0) and np.all(self.sigma == 0.0))


@dataclass(frozen=True)
class SourceSpec:
    """Soft line source. ``waveform`` is ``"cw"`` (ramped sinusoid) or ``"gaussian"``."""

    position: tuple = (0.0, 0.5)
    frequency: float = F0
    amplitude: float = 1.0
    waveform: str = "cw"
    ramp_cycles: float = 2.0
    pulse_width: float = 0.4e-9  # gaussian 1/e half-width

    def __post_init__(self):
        if self.waveform not in ("cw", "gaussian"):
            raise InvalidArgument(f"unknown waveform {self.waveform!r}")
        if self.frequency <= 0:
            raise InvalidArgument("frequency must be positive")
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))

    def values(self, t):
        t = np.asarray(t, dtype=np.float64)
        w = 2 * math.pi * self.frequency
        if self.waveform == "cw":
            t_ramp = self.ramp_cycles / self.frequency
            ramp = np.where(t < t_ramp, 0.5 * (1 - np.cos(math.pi * t / t_ramp)), 1.0)
            return self.amplitude * ramp * np.sin(w * t)
        t_c = 4 * self.pulse_width
        return self.amplitude * np.exp(-(((t - t_c) / self.pulse_width) ** 2)) * np.sin(w * (t - t_c))


@dataclass(frozen=True)
class ReceiverArray:
    positions: tuple

    def __post_init__(self):
        pos = tuple((float(x), float(y)) for x, y in self.positions)
        if not pos:
            raise InvalidArgument("receiver array is empty")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def default(cls, n=10, standoff=0.2, front_y=1.0, span=(-0.28, 0.28)):
        if standoff <= 0:
            raise GeometryError(f"standoff must be positive, got {standoff}")
        y = front_y - standoff
        return cls(tuple((float(x), y) for x in np.linspace(span[0], span[1], n)))

    def __len__(self):
        return len(self.positions)

    def subset(self, indices):
        return ReceiverArray(tuple(self.positions[i] for i in indices))

    def as_array(self):
        return np.array(self.positions, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class FieldRecord:
    """Ez time series, ``samples[k, n]`` at receiver k and time ``t0 + n*dt``."""

    samples: np.ndarray
    dt: float
    t0: float
    source: SourceSpec | None = None
    grid: GridSpec | None = None
    receivers: ReceiverArray | None = None
    peak: float = float("nan")  # max |Ez| over the whole grid and run

    @property
    def receiver_count(self):
        return self.samples.shape[0]

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.samples.shape[1])

    def __eq__(self, other):
        if not isinstance(other, FieldRecord):
            return NotImplemented
        return (self.dt == other.dt and self.t0 == other.t0
                and np.array_equal(self.samples, other.samples))


def _bilinear(grid: GridSpec, x, y):
    """Four (i, j, weight) taps interpolating Ez at (x, y)."""
    fx = (x - grid.x0) / grid.dx
    fy = (y - grid.y0) / grid.dx
    i = min(int(math.floor(fx)), grid.nx - 2)
    j = min(int(math.floor(fy)), grid.ny - 2)
    u, v = fx - i, fy - j
    taps = [(i, j, (1 - u) * (1 - v)), (i + 1, j, u * (1 - v)),
            (i, j + 1, (1 - u) * v), (i + 1, j + 1, u * v)]
    return [(a, b, w) for a, b, w in taps if w != 0.0]


def _pml_profiles(n, p, d, dt):
    """CPML (kappa, b, a) arrays for E nodes (length n) and H nodes (length n-1)."""
    L = p * d
    sigma_max = 0.8 * (PML_ORDER + 1) / (ETA0 * d)

    def coeffs(depth):
        rho = np.clip(depth / L, 0.0, 1.0) if p > 0 else np.zeros_like(depth)
        inside = depth > 0
        sig = sigma_max * rho**PML_ORDER
        kap = 1 + (PML_KAPPA_MAX - 1) * rho**PML_ORDER
        alp = np.where(inside, PML_ALPHA_MAX * (1 - rho), 0.0)
        b = np.exp(-(sig / kap + alp) * dt / EPS0)
        denom = sig * kap + kap**2 * alp
        a = np.where(inside & (denom > 0), sig / np.where(denom > 0, denom, 1.0) * (b - 1), 0.0)
        return kap, b, a

    ie = np.arange(n, dtype=np.float64)
    depth_e = np.maximum(p - ie, ie - (n - 1 - p)) * d
    ih = np.arange(n - 1, dtype=np.float64) + 0.5
    depth_h = np.maximum(p - ih, ih - (n - 1 - p)) * d
    return coeffs(depth_e), coeffs(depth_h)


def _slabs(p, n):
    return [slice(0, p), slice(n - p, n)] if p > 0 else []


def _validate_run(grid, medium, source, receivers, steps):
    if not check_courant(grid):
        raise StabilityError(f"Courant condition violated: dt={grid.dt:g} >= dx/(c*sqrt2)="
                             f"{grid.dx / (C0 * math.sqrt(2)):g}")
    if medium.shape != (grid.nx, grid.ny):
        raise InvalidArgument(f"medium shape {medium.shape} does not match grid ({grid.nx}, {grid.ny})")
    if steps < 1:
        raise InvalidArgument("steps must be >= 1")
    if not grid.contains(*source.position):
        raise GeometryError(f"source {source.position} outside the non-PML region")
    for pos in receivers.positions:
        if not grid.contains(*pos):
            raise GeometryError(f"receiver {pos} outside the non-PML region")


def run_fdtd(grid: GridSpec, medium: MediumGrid, source: SourceSpec,
             receivers: ReceiverArray, steps: int = DEFAULT_STEPS) -> FieldRecord:
    _validate_run(grid, medium, source, receivers, steps)
    nx, ny, d, dt, p = grid.nx, grid.ny, grid.dx, grid.dt, grid.pml_cells

    eps = EPS0 * medium.eps_r
    loss = medium.sigma * dt / (2 * eps)
    ca = ((1 - loss) / (1 + loss))[1:-1, 1:-1]
    cb = ((dt / eps) / (1 + loss))[1:-1, 1:-1]
    lossless = not np.any(medium.sigma)
    chd = dt / (MU0 * d)

    (kex, bex, aex), (khx, bhx, ahx) = _pml_profiles(nx, p, d, dt)
    (key, bey, aey), (khy, bhy, ahy) = _pml_profiles(ny, p, d, dt)
    stretched = PML_KAPPA_MAX != 1.0
    inv_kex = (1 / kex)[1:-1, None]
    inv_key = (1 / key)[None, 1:-1]
    inv_khx = (1 / khx)[:, None]
    inv_khy = (1 / khy)[None, :]

    ez = np.zeros((nx, ny))
    hx = np.zeros((nx, ny - 1))
    hy = np.zeros((nx - 1, ny))
    dez_dy = np.empty_like(hx)
    dez_dx = np.empty_like(hy)
    curl = np.empty((nx - 2, ny - 2))
    tmp = np.empty_like(curl)
    # CPML auxiliaries live only in their slabs; E-node slabs are offset by the PEC rim
    hy_slabs = [(s, bhx[s, None], ahx[s, None] / d, np.zeros((s.stop - s.start, ny)))
                for s in _slabs(p, nx - 1)]
    hx_slabs = [(s, bhy[None, s], ahy[None, s] / d, np.zeros((nx, s.stop - s.start)))
                for s in _slabs(p, ny - 1)]
    ezx_slabs = [(s, bex[1:-1][s, None], aex[1:-1][s, None] / d, np.zeros((s.stop - s.start, ny - 2)))
                 for s in _slabs(p, nx - 2)]
    ezy_slabs = [(s, bey[1:-1][None, s], aey[1:-1][None, s] / d, np.zeros((nx - 2, s.stop - s.start)))
                 for s in _slabs(p, ny - 2)]

    src_taps = _bilinear(grid, *source.position)
    src_i = np.array([t[0] for t in src_taps])
    src_j = np.array([t[1] for t in src_taps])
    src_w = np.array([t[2] for t in src_taps])
    # line current in amperes spread over one cell, so field levels do not depend on dx
    drive = source.values(dt * np.arange(1, steps + 1)) * (dt / (EPS0 * d * d))

    rx_i, rx_j, rx_w, rx_k = [], [], [], []
    for k, (x, y) in enumerate(receivers.positions):
        for i, j, w in _bilinear(grid, x, y):
            rx_i.append(i)
            rx_j.append(j)
            rx_w.append(w)
            rx_k.append(k)
    n_rx = len(receivers)
    rx_i, rx_j = np.array(rx_i), np.array(rx_j)
    rx_mix = np.zeros((n_rx, len(rx_w)))
    rx_mix[rx_k, np.arange(len(rx_w))] = rx_w
    out = np.zeros((n_rx, steps))
    peak = 0.0
    ez_in = ez[1:-1, 1:-1]

    for n in range(steps):
        np.subtract(ez[:, 1:], ez[:, :-1], out=dez_dy)
        for s, b, a, psi in hx_slabs:
            psi *= b
            psi += a * dez_dy[:, s]
        if stretched:
            dez_dy *= inv_khy
        dez_dy *= chd
        hx -= dez_dy
        for s, b, a, psi in hx_slabs:
            hx[:, s] -= (chd * d) * psi

        np.subtract(ez[1:, :], ez[:-1, :], out=dez_dx)
        for s, b, a, psi in hy_slabs:
            psi *= b
            psi += a * dez_dx[s, :]
        if stretched:
            dez_dx *= inv_khx
        dez_dx *= chd
        hy += dez_dx
        for s, b, a, psi in hy_slabs:
            hy[s, :] += (chd * d) * psi

        np.subtract(hy[1:, 1:-1], hy[:-1, 1:-1], out=curl)
        for s, b, a, psi in ezx_slabs:
            psi *= b
            psi += a * curl[s, :]
        if stretched:
            curl *= inv_kex
        np.subtract(hx[1:-1, 1:], hx[1:-1, :-1], out=tmp)
        for s, b, a, psi in ezy_slabs:
            psi *= b
            psi += a * tmp[:, s]
        if stretched:
            tmp *= inv_key
        curl -= tmp
        curl *= 1.0 / d
        for s, b, a, psi in ezx_slabs:
            curl[s, :] += psi
        for s, b, a, psi in ezy_slabs:
            curl[:, s] -= psi
        curl *= cb
        if lossless:
            ez_in += curl
        else:
            ez_in *= ca
            ez_in += curl

        ez[src_i, src_j] += src_w * drive[n]
        m = float(np.max(np.abs(ez_in)))
        if not math.isfinite(m):
            raise DivergenceError(f"non-finite Ez at step {n + 1}", step=n + 1)
        if m > peak:
            peak = m
        out[:, n] = rx_mix @ ez[rx_i, rx_j]

    return FieldRecord(samples=out, dt=dt, t0=dt, source=source, grid=grid,
                       receivers=receivers, peak=peak)


def run_pair(grid, medium, source, receivers, steps=DEFAULT_STEPS):
    """(wall record, free-space record) with identical excitation."""
    wall = run_fdtd(grid, medium, source, receivers, steps)
    free = run_fdtd(grid, MediumGrid.free_space(grid), source, receivers, steps)
    return wall, free
