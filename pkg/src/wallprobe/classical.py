"""Integral-equation baselines on the profile grid: BP, BAM and BIM.

Pulse basis, point matching. Unknown is the contrast ``chi = eps_r - 1`` on
the 32x32 profile cells, ordered like ``DielectricProfile.values.ravel()``
(row = y index, column = x index).

Phasors here follow the exp(-i w t) convention of the Hankel kernel. Field
vectors from the pipeline use the opposite sign, so ``measurement_from_vector``
conjugates them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.special import hankel1
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import GeometryError, InvalidArgument, SolverError
from .fdtd import C0, F0, ReceiverArray, SourceSpec
from .walls import PROFILE_SHAPE, PROFILE_X, PROFILE_Y, DielectricProfile

DEFAULT_LAMBDA_FACTOR = 0.01
INC_FLOOR = 1e-12  # relative floor on |e_inc|^2 in the back-projection


def greens(k0, r):
    """2D Helmholtz Green's function (i/4) H0(k0 r)."""
    return 0.25j * hankel1(0, k0 * np.asarray(r, dtype=float))


def self_cell(k0, area):
    """k0^2 times the integral of the Green's function over a disc of the cell's area."""
    a = np.sqrt(area / np.pi)
    return 0.5j * np.pi * k0 * a * hankel1(1, k0 * a) - 1.0


def cell_centers(extent=(PROFILE_X, PROFILE_Y), shape=PROFILE_SHAPE):
    (x0, x1), (y0, y1) = extent
    ny, nx = shape
    xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
    ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
    X, Y = np.meshgrid(xs, ys)  # rows follow y
    return np.column_stack([X.ravel(), Y.ravel()])


@dataclass
class ScatterOperators:
    G_rx: np.ndarray  # (N, M)
    G_dom: np.ndarray  # (M, M)
    e_inc: np.ndarray  # (M,)
    e_inc_rx: np.ndarray  # (N,) incident field at the receivers
    k0: float
    centers: np.ndarray
    receivers: np.ndarray
    source: tuple
    extent: tuple
    shape: tuple
    cell_area: float
    amplitude: complex = 1.0

    @property
    def n_meas(self):
        return self.G_rx.shape[0]

    @property
    def n_cells(self):
        return self.G_rx.shape[1]


def _positions(rx):
    if isinstance(rx, ReceiverArray):
        return rx.as_array()
    arr = np.asarray(rx, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidArgument(f"receiver positions must be (N, 2), got {arr.shape}")
    return arr


def build_operators(extent=(PROFILE_X, PROFILE_Y), receivers=None, source=(0.0, 0.5), f0=F0,
                    shape=PROFILE_SHAPE) -> ScatterOperators:
    rx = _positions(receivers if receivers is not None else ReceiverArray.default())
    if isinstance(source, SourceSpec):
        f0 = source.frequency if f0 is None else f0
        source = source.position
    src = np.asarray(source, dtype=float)
    (x0, x1), (y0, y1) = extent
    if x1 <= x0 or y1 <= y0:
        raise GeometryError(f"degenerate profile extent {extent}")
    inside = (rx[:, 0] >= x0) & (rx[:, 0] <= x1) & (rx[:, 1] >= y0) & (rx[:, 1] <= y1)
    if np.any(inside):
        raise GeometryError(f"receiver(s) {np.flatnonzero(inside).tolist()} lie inside the profile extent")
    if x0 <= src[0] <= x1 and y0 <= src[1] <= y1:
        raise GeometryError("source lies inside the profile extent")
    k0 = 2 * np.pi * f0 / C0
    centers = cell_centers(extent, shape)
    area = (x1 - x0) * (y1 - y0) / (shape[0] * shape[1])
    scale = k0 * k0 * area
    d_rx = np.hypot(rx[:, None, 0] - centers[None, :, 0], rx[:, None, 1] - centers[None, :, 1])
    G_rx = scale * greens(k0, d_rx)
    d_dom = np.hypot(centers[:, None, 0] - centers[None, :, 0], centers[:, None, 1] - centers[None, :, 1])
    np.fill_diagonal(d_dom, 1.0)
    G_dom = scale * greens(k0, d_dom)
    np.fill_diagonal(G_dom, self_cell(k0, area))
    e_inc = greens(k0, np.hypot(*(centers - src).T))
    e_inc_rx = greens(k0, np.hypot(*(rx - src).T))
    return ScatterOperators(G_rx, G_dom, e_inc, e_inc_rx, k0, centers, rx, tuple(src), tuple(extent),
                            tuple(shape), area)


def calibrate_operators(ops: ScatterOperators, freespace) -> ScatterOperators:
    """Scale the incident field to fit measured free-space phasors (least squares)."""
    f = np.asarray(freespace)
    if f.shape != ops.e_inc_rx.shape:
        raise InvalidArgument(f"need {ops.n_meas} free-space phasors, got {f.shape}")
    base = ops.e_inc_rx / ops.amplitude
    denom = np.vdot(base, base)
    if denom == 0:
        raise InvalidArgument("incident field vanishes at all receivers")
    alpha = np.vdot(base, f) / denom
    if alpha == 0:
        raise InvalidArgument("free-space phasors are all zero; cannot calibrate")
    ratio = alpha / ops.amplitude
    return replace(ops, e_inc=ops.e_inc * ratio, e_inc_rx=ops.e_inc_rx * ratio, amplitude=alpha)


def measurement_from_vector(vec, n=None):
    """Complex measurement (exp(-iwt) convention) from a [real block, imag block] vector."""
    v = np.asarray(vec, dtype=float).ravel()
    if v.size % 2:
        raise InvalidArgument("phasor vector must have an even length")
    half = v.size // 2
    if n is not None and half != n:
        raise InvalidArgument(f"expected {n} phasors, got {half}")
    return np.conj(v[:half] + 1j * v[half:])


# --- forward model ---------------------------------------------------------

def _as_chi(ops, chi):
    c = np.asarray(getattr(chi, "chi", chi), dtype=complex).ravel()
    if c.size != ops.n_cells:
        raise InvalidArgument(f"contrast has {c.size} cells, operators expect {ops.n_cells}")
    return c


def total_field(ops: ScatterOperators, chi):
    """Solve e = e_inc + G_dom diag(chi) e."""
    c = _as_chi(ops, chi)
    if not np.any(c):
        return ops.e_inc.copy()
    A = np.eye(ops.n_cells, dtype=complex) - ops.G_dom * c[None, :]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(A, check_finite=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
        cond = float(np.linalg.cond(A)) if np.all(np.isfinite(A)) else np.inf
        raise SolverError(f"state equation is singular (condition {cond:.3g})", condition=cond) from None
    # cheap 1-norm estimate of |A^-1| from the LU factors; A = I - G X is compared with I
    anorm = np.linalg.norm(A, 1)
    rcond, _ = scipy.linalg.lapack.zgecon(lu[0], anorm, norm="1")
    cond = max(anorm, 1.0) / (rcond * anorm) if rcond * anorm > 0 else np.inf
    if not cond < 1.0 / np.finfo(float).eps:
        raise SolverError(f"state equation is numerically singular (condition ~{cond:.3g})", condition=cond)
    e = scipy.linalg.lu_solve(lu, ops.e_inc)
    if not np.all(np.isfinite(e)):
        raise SolverError("state equation produced non-finite fields", condition=np.inf)
    return e


def mom_forward(ops: ScatterOperators, chi):
    """Scattered field at the receivers for contrast ``chi``."""
    c = _as_chi(ops, chi)
    e = total_field(ops, c)
    return ops.G_rx @ (c * e)


def born_forward(ops: ScatterOperators, chi):
    c = _as_chi(ops, chi)
    return ops.G_rx @ (c * ops.e_inc)


# --- inversions ------------------------------------------------------------

@dataclass
class ContrastGrid:
    chi: np.ndarray  # (ny, nx) complex
    extent: tuple = (PROFILE_X, PROFILE_Y)
    info: dict = field(default_factory=dict)

    def to_profile(self) -> DielectricProfile:
        eps = 1.0 + np.maximum(np.real(self.chi), 0.0)
        return DielectricProfile(eps, self.extent[0], self.extent[1])


def _grid(ops, chi, **info):
    return ContrastGrid(np.asarray(chi).reshape(ops.shape), ops.extent, info)


def _measure(ops, s):
    s = np.asarray(s, dtype=complex).ravel()
    if s.size != ops.n_meas:
        raise InvalidArgument(f"expected {ops.n_meas} measurements, got {s.size}")
    return s


def bp_invert(ops: ScatterOperators, s) -> ContrastGrid:
    s = _measure(ops, s)
    if not np.any(s):
        return _grid(ops, np.zeros(ops.n_cells, complex), gamma=0.0)
    mag2 = np.abs(ops.e_inc) ** 2
    mag2 = np.maximum(mag2, INC_FLOOR * mag2.max())
    chi0 = np.conj(ops.e_inc) * (ops.G_rx.conj().T @ s) / mag2
    pred = born_forward(ops, chi0)
    pp = np.vdot(pred, pred)
    gamma = np.vdot(pred, s) / pp if pp != 0 else 0.0
    return _grid(ops, gamma * chi0, gamma=complex(gamma))


def _tikhonov(A, s, lam):
    """(A^H A + lam I)^-1 A^H s, computed in the small measurement space."""
    N = A.shape[0]
    K = A @ A.conj().T + lam * np.eye(N)
    return A.conj().T @ scipy.linalg.solve(K, s, assume_a="her")


def default_lambda(A, factor=DEFAULT_LAMBDA_FACTOR):
    return factor * float(np.linalg.norm(A, 2)) ** 2


def bam_invert(ops: ScatterOperators, s, tikhonov_lambda=None, lambda_factor=DEFAULT_LAMBDA_FACTOR) -> ContrastGrid:
    s = _measure(ops, s)
    A = ops.G_rx * ops.e_inc[None, :]
    lam = default_lambda(A, lambda_factor) if tikhonov_lambda is None else float(tikhonov_lambda)
    if not lam > 0:
        raise InvalidArgument(f"Tikhonov lambda must be > 0, got {lam}")
    chi = _tikhonov(A, s, lam)
    return _grid(ops, chi, lam=lam)


def bim_invert(ops: ScatterOperators, s, max_iters=20, tol=1e-3, tikhonov_lambda=None,
               lambda_factor=DEFAULT_LAMBDA_FACTOR) -> ContrastGrid:
    """Born iterative method.

    The first update uses the incident field, so iterate 1 is the BAM answer.
    ``info`` records per-iterate data residuals; if the last iterate is not
    the best one, the best is returned with ``info['warning']`` set.
    """
    s = _measure(ops, s)
    if max_iters < 1:
        raise InvalidArgument("max_iters must be >= 1")
    if tikhonov_lambda is not None and not float(tikhonov_lambda) > 0:
        raise InvalidArgument(f"Tikhonov lambda must be > 0, got {tikhonov_lambda}")
    norm_s = np.linalg.norm(s)
    chi = np.zeros(ops.n_cells, complex)
    e = ops.e_inc.copy()
    iterates, residuals = [], []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        A = ops.G_rx * e[None, :]
        lam = default_lambda(A, lambda_factor) if tikhonov_lambda is None else float(tikhonov_lambda)
        if lam == 0:  # zero field everywhere
            new = np.zeros_like(chi)
        else:
            new = _tikhonov(A, s, lam)
        e = total_field(ops, new)
        resid = float(np.linalg.norm(s - ops.G_rx @ (new * e)))
        iterates.append(new)
        residuals.append(resid / norm_s if norm_s else resid)
        change = np.linalg.norm(new - chi)
        size = np.linalg.norm(new)
        chi = new
        if size == 0 or change <= tol * size:
            converged = True
            break
    best = int(np.argmin(residuals))
    info = {"iterations": it, "residuals": residuals, "converged": converged, "warning": None}
    if best != len(iterates) - 1:
        info["warning"] = f"returned iterate {best + 1} of {len(iterates)} (lowest data residual)"
    return _grid(ops, iterates[best], **info)


METHODS = {"bp": bp_invert, "bam": bam_invert, "bim": bim_invert}


def invert(method, ops, s, **kw) -> ContrastGrid:
    if method not in METHODS:
        raise InvalidArgument(f"unknown classical method {method!r}; choose from {sorted(METHODS)}")
    if method == "bp":
        kw = {}
    elif method == "bam":
        kw = {k: v for k, v in kw.items() if k in ("tikhonov_lambda", "lambda_factor")}
    else:
        kw = {k: v for k, v in kw.items() if k in ("tikhonov_lambda", "lambda_factor", "max_iters", "tol")}
    return METHODS[method](ops, s, **kw)


def invert_case(case, method="bp", ops=None, **kw) -> ContrastGrid:
    """Invert a pipeline ``Case`` using its frequency vector and free-space phasors."""
    if ops is None:
        ops = build_operators(receivers=case.receivers)
    ops = calibrate_operators(ops, measurement_from_vector(case.freespace_phasor))
    s = measurement_from_vector(case.freq_input, ops.n_meas)
    return invert(method, ops, s, **kw)


class ClassicalInverter(TransformerMixin, BaseEstimator):
    """Estimator wrapper around BP/BAM/BIM.

    ``fit`` optionally takes free-space phasor vectors (rows of 2N reals) to
    calibrate the incident field; their mean is used. ``transform`` returns
    complex contrasts (n, M); ``predict`` returns eps profiles (n, M).
    """

    def __init__(self, method="bp", lambda_factor=DEFAULT_LAMBDA_FACTOR, tikhonov_lambda=None,
                 max_iters=20, tol=1e-3, receivers=None, source=(0.0, 0.5), f0=F0):
        self.method = method
        self.lambda_factor = lambda_factor
        self.tikhonov_lambda = tikhonov_lambda
        self.max_iters = max_iters
        self.tol = tol
        self.receivers = receivers
        self.source = source
        self.f0 = f0

    def fit(self, X=None, y=None):
        if self.method not in METHODS:
            raise InvalidArgument(f"unknown classical method {self.method!r}")
        ops = build_operators(receivers=self.receivers, source=self.source, f0=self.f0)
        if X is not None:
            from .validation import check_field_matrix

            X = check_field_matrix(X, 2 * ops.n_meas)
            fs = np.mean([measurement_from_vector(r) for r in X], axis=0)
            ops = calibrate_operators(ops, fs)
        self.ops_ = ops
        self.n_features_in_ = 2 * ops.n_meas
        return self

    def _chis(self, X):
        from .validation import check_field_matrix, check_fitted

        check_fitted(self, "ops_")
        X = check_field_matrix(X, 2 * self.ops_.n_meas)
        kw = dict(tikhonov_lambda=self.tikhonov_lambda, lambda_factor=self.lambda_factor,
                  max_iters=self.max_iters, tol=self.tol)
        return [invert(self.method, self.ops_, measurement_from_vector(r), **kw) for r in X]

    def transform(self, X):
        return np.stack([g.chi.ravel() for g in self._chis(X)])

    def predict(self, X):
        return np.stack([g.to_profile().values.ravel() for g in self._chis(X)])
