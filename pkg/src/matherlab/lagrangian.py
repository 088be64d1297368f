"""Tonelli Lagrangian families on T^2 with exact derivatives.

Every coefficient field (metric, potential, magnetic 1-form) is a real
truncated Fourier series on the torus, so smoothness is automatic and
derivatives of any order are exact.  All families share the fiberwise
quadratic form

    L(x, v) = 1/2 v.g(x).v + A(x).v - U(x)

which covers flat-kinetic, mechanical, magnetic and custom-fourier data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CotangentState, TangentState, wrap_xy
from .errors import (
    ConvergenceError,
    InconsistentDerivativesError,
    InvalidInputError,
    NotTonelliError,
)

TWO_PI = 2.0 * np.pi


class FourierSeries2D:
    """Real truncated Fourier series sum_k [c_k cos(2pi k.x) + s_k sin(2pi k.x)]."""

    def __init__(self, modes, cos_coeffs, sin_coeffs):
        self.modes = np.atleast_2d(np.asarray(modes, dtype=int))
        self.cos_coeffs = np.atleast_1d(np.asarray(cos_coeffs, dtype=float))
        self.sin_coeffs = np.atleast_1d(np.asarray(sin_coeffs, dtype=float))
        if self.modes.shape[0] == 0:
            self.modes = np.zeros((1, 2), dtype=int)
            self.cos_coeffs = np.zeros(1)
            self.sin_coeffs = np.zeros(1)
        if not (len(self.modes) == len(self.cos_coeffs) == len(self.sin_coeffs)):
            raise InvalidInputError("Fourier mode/coefficient length mismatch")

    @classmethod
    def constant(cls, c: float) -> "FourierSeries2D":
        return cls(np.zeros((1, 2), dtype=int), [float(c)], [0.0])

    @classmethod
    def zero(cls) -> "FourierSeries2D":
        return cls.constant(0.0)

    @classmethod
    def from_table(cls, rows) -> "FourierSeries2D":
        """Build from rows [m, n, cos_coeff, sin_coeff]."""
        if not rows:
            return cls.zero()
        arr = np.asarray(rows, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise InvalidInputError("Fourier table rows must be [m, n, cos, sin]")
        return cls(arr[:, :2].astype(int), arr[:, 2], arr[:, 3])

    def table(self):
        return [
            [int(m), int(n), float(c), float(s)]
            for (m, n), c, s in zip(self.modes, self.cos_coeffs, self.sin_coeffs)
        ]

    def is_zero(self) -> bool:
        return not (np.any(self.cos_coeffs) or np.any(self.sin_coeffs))

    def is_constant(self) -> bool:
        nonzero = np.any(self.modes != 0, axis=1)
        return not np.any(self.cos_coeffs[nonzero]) and not np.any(self.sin_coeffs[nonzero])

    def shifted(self, dc: float) -> "FourierSeries2D":
        """Series plus a constant."""
        out = FourierSeries2D(self.modes.copy(), self.cos_coeffs.copy(), self.sin_coeffs.copy())
        zero_rows = np.where(~np.any(out.modes != 0, axis=1))[0]
        if len(zero_rows):
            out.cos_coeffs[zero_rows[0]] += dc
        else:
            out.modes = np.vstack([out.modes, [[0, 0]]])
            out.cos_coeffs = np.append(out.cos_coeffs, dc)
            out.sin_coeffs = np.append(out.sin_coeffs, 0.0)
        return out

    def _phases(self, x: np.ndarray) -> np.ndarray:
        # x: (..., 2) -> (..., M)
        return TWO_PI * (x[..., None, 0] * self.modes[:, 0] + x[..., None, 1] * self.modes[:, 1])

    def value(self, x: np.ndarray) -> np.ndarray:
        ph = self._phases(np.asarray(x, dtype=float))
        return np.cos(ph) @ self.cos_coeffs + np.sin(ph) @ self.sin_coeffs

    def grad(self, x: np.ndarray) -> np.ndarray:
        """Gradient, shape (..., 2)."""
        x = np.asarray(x, dtype=float)
        ph = self._phases(x)
        radial = -np.sin(ph) * self.cos_coeffs + np.cos(ph) * self.sin_coeffs
        return TWO_PI * radial @ self.modes.astype(float)

    def hess(self, x: np.ndarray) -> np.ndarray:
        """Hessian, shape (..., 2, 2)."""
        x = np.asarray(x, dtype=float)
        ph = self._phases(x)
        radial = -(np.cos(ph) * self.cos_coeffs + np.sin(ph) * self.sin_coeffs)
        mm = self.modes[:, :, None] * self.modes[:, None, :]  # (M, 2, 2)
        return TWO_PI**2 * np.einsum("...m,mij->...ij", radial, mm.astype(float))


def _series(data) -> FourierSeries2D:
    if data is None:
        return FourierSeries2D.zero()
    if isinstance(data, FourierSeries2D):
        return data
    if isinstance(data, (int, float)):
        return FourierSeries2D.constant(float(data))
    return FourierSeries2D.from_table(data)


@dataclass
class TonelliLagrangian:
    """Evaluatable Lagrangian with exact first and second derivatives.

    Immutable after construction; all evaluators are pure and vectorized
    over leading axes of x and v.
    """

    family: str
    g11: FourierSeries2D
    g12: FourierSeries2D
    g22: FourierSeries2D
    potential: FourierSeries2D
    a1: FourierSeries2D
    a2: FourierSeries2D
    params: dict = field(default_factory=dict)

    @classmethod
    def flat(cls) -> "TonelliLagrangian":
        """Flat-kinetic family: L = |v|^2 / 2."""
        one = FourierSeries2D.constant(1.0)
        z = FourierSeries2D.zero
        return cls("flat-kinetic", one, z(), FourierSeries2D.constant(1.0), z(), z(), z())

    @classmethod
    def mechanical(cls, potential, metric=None, params=None) -> "TonelliLagrangian":
        """L = 1/2 v.g.v - U(x); default metric is flat."""
        g11, g12, g22 = _metric_triplet(metric)
        z = FourierSeries2D.zero
        return cls("mechanical", g11, g12, g22, _series(potential), z(), z(),
                   params or {})

    @classmethod
    def magnetic(cls, a1, a2, potential=None, metric=None, params=None) -> "TonelliLagrangian":
        """L = 1/2 v.g.v + A(x).v - U(x)."""
        g11, g12, g22 = _metric_triplet(metric)
        return cls("magnetic", g11, g12, g22, _series(potential),
                   _series(a1), _series(a2), params or {})

    @classmethod
    def custom(cls, g11, g12, g22, potential=None, a1=None, a2=None, params=None):
        return cls("custom-fourier", _series(g11), _series(g12), _series(g22),
                   _series(potential), _series(a1), _series(a2), params or {})

    # -- raw evaluators -------------------------------------------------

    def metric(self, x: np.ndarray) -> np.ndarray:
        """g(x), shape (..., 2, 2), symmetric."""
        x = np.asarray(x, dtype=float)
        g11 = self.g11.value(x)
        g12 = self.g12.value(x)
        g22 = self.g22.value(x)
        out = np.empty(np.shape(g11) + (2, 2))
        out[..., 0, 0] = g11
        out[..., 0, 1] = g12
        out[..., 1, 0] = g12
        out[..., 1, 1] = g22
        return out

    def magnetic_form(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([self.a1.value(x), self.a2.value(x)], axis=-1)

    def value(self, x, v) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        g = self.metric(x)
        quad = 0.5 * np.einsum("...i,...ij,...j->...", v, g, v)
        lin = np.einsum("...i,...i->...", self.magnetic_form(x), v)
        return quad + lin - self.potential.value(x)

    def dv(self, x, v) -> np.ndarray:
        """dL/dv = g(x) v + A(x)."""
        v = np.asarray(v, dtype=float)
        return np.einsum("...ij,...j->...i", self.metric(x), v) + self.magnetic_form(x)

    def dx(self, x, v) -> np.ndarray:
        """dL/dx, shape (..., 2)."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        dg = self._metric_dx(x)  # (..., 2, 2, 2), last index = derivative direction
        quad = 0.5 * np.einsum("...i,...ijm,...j->...m", v, dg, v)
        da = np.stack([self.a1.grad(x), self.a2.grad(x)], axis=-2)  # (..., i, m)
        lin = np.einsum("...im,...i->...m", da, v)
        return quad + lin - self.potential.grad(x)

    def d2v(self, x, v=None) -> np.ndarray:
        """Fiber Hessian d2L/dv2 = g(x); v accepted for interface symmetry."""
        return self.metric(x)

    def d2vx(self, x, v) -> np.ndarray:
        """Mixed Hessian, entry [i, j] = d2L/dv_i dx_j."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        dg = self._metric_dx(x)
        da = np.stack([self.a1.grad(x), self.a2.grad(x)], axis=-2)
        return np.einsum("...ikj,...k->...ij", dg, v) + da

    def _metric_dx(self, x: np.ndarray) -> np.ndarray:
        """dg/dx, shape (..., 2, 2, 2): [i, j, m] = d g_ij / d x_m."""
        d11 = self.g11.grad(x)
        d12 = self.g12.grad(x)
        d22 = self.g22.grad(x)
        out = np.empty(d11.shape[:-1] + (2, 2, 2))
        out[..., 0, 0, :] = d11
        out[..., 0, 1, :] = d12
        out[..., 1, 0, :] = d12
        out[..., 1, 1, :] = d22
        return out

    def _metric_dxx(self, x: np.ndarray) -> np.ndarray:
        """d2g/dx2, shape (..., 2, 2, 2, 2): [i, j, m, n] = d2 g_ij / dx_m dx_n."""
        h11 = self.g11.hess(x)
        h12 = self.g12.hess(x)
        h22 = self.g22.hess(x)
        out = np.empty(h11.shape[:-2] + (2, 2, 2, 2))
        out[..., 0, 0, :, :] = h11
        out[..., 0, 1, :, :] = h12
        out[..., 1, 0, :, :] = h12
        out[..., 1, 1, :, :] = h22
        return out

    # -- energy and duality ----------------------------------------------

    def energy(self, x, v) -> np.ndarray:
        """E(x,v) = <dL/dv, v> - L; for this family 1/2 v.g.v + U(x)."""
        v = np.asarray(v, dtype=float)
        return np.einsum("...i,...i->...", self.dv(x, v), v) - self.value(x, v)

    def momentum(self, x, v) -> np.ndarray:
        return self.dv(x, v)

    def fiber_velocity(self, x, p, tol=1e-12, max_iter=50) -> np.ndarray:
        """Invert p = dL/dv on the fiber by damped Newton, flat guess v = p."""
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        v = p.copy()
        res = self.dv(x, v) - p
        rnorm = np.linalg.norm(res)
        for _ in range(max_iter):
            if rnorm <= tol:
                return v
            g = self.d2v(x)
            step = np.linalg.solve(g, res[..., None])[..., 0]
            scale = 1.0
            for _ in range(30):
                trial = v - scale * step
                tres = self.dv(x, trial) - p
                tnorm = np.linalg.norm(tres)
                if tnorm < rnorm:
                    break
                scale *= 0.5
            else:
                raise ConvergenceError(
                    f"fiber Newton stalled at residual {rnorm:.3e}", best=v)
            v, res, rnorm = trial, tres, tnorm
        if rnorm <= tol:
            return v
        raise ConvergenceError(
            f"fiber Newton did not reach tol {tol:.1e} (residual {rnorm:.3e})", best=v)

    def hamiltonian_value(self, x, p) -> np.ndarray:
        """H(x,p) via the Fenchel supremum realized at the fiber inverse."""
        v = self.fiber_velocity(x, p)
        return np.einsum("...i,...i->...", np.asarray(p, dtype=float), v) - self.value(x, v)

    def content_key(self) -> str:
        """Stable textual identity used for cache keys."""
        parts = [self.family]
        for name in ("g11", "g12", "g22", "potential", "a1", "a2"):
            parts.append(f"{name}:{getattr(self, name).table()!r}")
        return "|".join(parts)


def _metric_triplet(metric):
    if metric is None:
        return (FourierSeries2D.constant(1.0), FourierSeries2D.zero(),
                FourierSeries2D.constant(1.0))
    g11, g12, g22 = metric
    return _series(g11), _series(g12), _series(g22)


# -- typed operation surface ---------------------------------------------

def eval_L(lag: TonelliLagrangian, s: TangentState) -> float:
    return float(lag.value(s.x(), s.v()))


def energy(lag: TonelliLagrangian, s: TangentState) -> float:
    return float(lag.energy(s.x(), s.v()))


def legendre(lag: TonelliLagrangian, s: TangentState) -> CotangentState:
    p = lag.momentum(s.x(), s.v())
    return CotangentState(s.point, float(p[0]), float(p[1]))


def inverse_legendre(lag: TonelliLagrangian, c: CotangentState) -> TangentState:
    v = lag.fiber_velocity(c.x(), c.p())
    return TangentState(c.point, float(v[0]), float(v[1]))


def hamiltonian(lag: TonelliLagrangian, c: CotangentState) -> float:
    return float(lag.hamiltonian_value(c.x(), c.p()))


# -- validation ------------------------------------------------------------

@dataclass
class ValidationReport:
    min_hessian_eig: float
    superlinearity_ratios: np.ndarray
    velocity_magnitudes: np.ndarray
    max_derivative_mismatch: float
    passed: bool


def validate_tonelli(lag: TonelliLagrangian, base_points: int = 32,
                     v_magnitudes: int = 8, v_cap: float = 20.0,
                     directions: int = 8, fd_step: float = 1e-5,
                     fd_samples: int = 64, seed: int = 0,
                     mismatch_tol: float = 1e-5) -> ValidationReport:
    """Certify convexity and superlinearity numerically on a grid.

    Convexity: min eigenvalue of the fiber Hessian over base_points^2
    positions must be positive.  Superlinearity: L/|v| must grow along
    sampled rays up to the velocity cap.  Derivatives are cross-checked
    against central finite differences.
    """
    if base_points < 32 or v_magnitudes < 8:
        raise InvalidInputError("validation grid below the 32^2 x 8 minimum")
    xs = np.arange(base_points) / base_points
    grid = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1).reshape(-1, 2)

    g = lag.metric(grid)
    half_tr = 0.5 * (g[:, 0, 0] + g[:, 1, 1])
    disc = np.sqrt(0.25 * (g[:, 0, 0] - g[:, 1, 1]) ** 2 + g[:, 0, 1] ** 2)
    min_eig = float(np.min(half_tr - disc))

    mags = np.geomspace(1.0, v_cap, v_magnitudes)
    angles = TWO_PI * np.arange(directions) / directions
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    sub = grid[:: max(1, len(grid) // 64)]
    ratios = np.empty(v_magnitudes)
    for i, m in enumerate(mags):
        vals = lag.value(sub[:, None, :], m * dirs[None, :, :])
        ratios[i] = float(np.min(vals) / m)

    rng = np.random.default_rng(seed)
    xr = rng.random((fd_samples, 2))
    vr = rng.normal(scale=2.0, size=(fd_samples, 2))
    mismatch = 0.0
    for axis in range(2):
        ex = np.zeros(2)
        ex[axis] = fd_step
        fd_x = (lag.value(xr + ex, vr) - lag.value(xr - ex, vr)) / (2 * fd_step)
        fd_v = (lag.value(xr, vr + ex) - lag.value(xr, vr - ex)) / (2 * fd_step)
        ax = lag.dx(xr, vr)[:, axis]
        av = lag.dv(xr, vr)[:, axis]
        mismatch = max(
            mismatch,
            float(np.max(np.abs(fd_x - ax) / (1.0 + np.abs(ax)))),
            float(np.max(np.abs(fd_v - av) / (1.0 + np.abs(av)))),
        )

    report = ValidationReport(min_eig, ratios, mags, mismatch, passed=True)
    if min_eig <= 0.0:
        report.passed = False
        raise NotTonelliError(
            f"fiber Hessian has min eigenvalue {min_eig:.3e} <= 0 on the grid")
    if mismatch > mismatch_tol:
        report.passed = False
        raise InconsistentDerivativesError(
            f"derivative mismatch {mismatch:.3e} exceeds {mismatch_tol:.1e}")
    return report


# -- stock potentials -------------------------------------------------------

def two_cosine_potential(eps: float) -> FourierSeries2D:
    """U = eps (cos 2pi x1 + cos 2pi x2); separable benchmark with max 2 eps."""
    return FourierSeries2D.from_table([[1, 0, eps, 0.0], [0, 1, eps, 0.0]])


def coupled_ridge_potential(eps: float, coupling: float = 1.0) -> FourierSeries2D:
    """Non-separable potential with a single ridge at x1 = 0 and max 2 eps.

    U = eps [ cos(2pi x1)(1 + cos(2pi x2)) - a (1 - cos(4pi x1)) ].
    The product term breaks integrability; the second term sharpens the
    transverse curvature of the ridge without moving the maximum.
    """
    a = coupling
    return FourierSeries2D.from_table([
        [1, 0, eps, 0.0],
        [1, 1, 0.5 * eps, 0.0],
        [1, -1, 0.5 * eps, 0.0],
        [0, 0, -a * eps, 0.0],
        [2, 0, a * eps, 0.0],
    ])


def state(x1, x2, v1, v2) -> TangentState:
    return TangentState(wrap_xy(x1, x2), float(v1), float(v2))


def costate(x1, x2, p1, p2) -> CotangentState:
    return CotangentState(wrap_xy(x1, x2), float(p1), float(p2))
