"""Euler-Lagrange flow on T T^2: fixed-step RK4, linearization, rotation vectors.

Positions are integrated in the universal cover (the coefficient data is
periodic, so no wrapping is ever needed mid-step); the canonical torus
representative and the lift are both recorded.  A fixed step keeps the
sampling deterministic, which the covering counts and Lyapunov sums
downstream rely on; energy drift is audited after the fact instead of
projecting onto the level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CotangentState, HomologyClass, TangentState, wrap_coords
from .errors import (
    IllConditionedError,
    InsufficientDataError,
    IntegrationFailureError,
    InvalidInputError,
)
from .lagrangian import TonelliLagrangian

ENERGY_BUDGET = 1e-6  # allowed |E(t) - E(0)| per unit time at dt = 1e-3


@dataclass
class Trajectory:
    """Sampled flow orbit: strictly increasing times, wrapped states, lifts."""

    times: np.ndarray
    positions: np.ndarray   # wrapped into [0,1)^2
    velocities: np.ndarray
    lifts: np.ndarray       # continuous lift, wraps to positions
    energies: np.ndarray

    @property
    def duration(self) -> float:
        return float(abs(self.times[-1] - self.times[0]))

    def state(self, i: int) -> TangentState:
        return TangentState.make(*self.positions[i], *self.velocities[i])

    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energies - self.energies[0])))

    def segment(self, t0: float, t1: float) -> "Trajectory":
        mask = (self.times >= t0 - 1e-12) & (self.times <= t1 + 1e-12)
        return Trajectory(self.times[mask], self.positions[mask],
                          self.velocities[mask], self.lifts[mask],
                          self.energies[mask])


@dataclass
class TangentFrame:
    """Linearized flow applied to the standard basis of T(T T^2)."""

    matrix: np.ndarray

    def det(self) -> float:
        return float(np.linalg.det(self.matrix))


@dataclass
class HamiltonianTrajectory:
    """Cotangent-side orbit samples from the conjugated Hamiltonian flow."""

    times: np.ndarray
    positions: np.ndarray
    momenta: np.ndarray
    lifts: np.ndarray
    energies: np.ndarray


def acceleration(lag: TonelliLagrangian, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Acceleration from the EL equation: g(x) a = dL/dx - d2L/dvdx . v."""
    g = lag.metric(x)
    rhs = lag.dx(x, v) - np.einsum("...ij,...j->...i", lag.d2vx(x, v), v)
    return np.linalg.solve(g, rhs[..., None])[..., 0]


def el_vector_field(lag: TonelliLagrangian, s: TangentState):
    """(velocity, acceleration) at a single phase point."""
    x, v = s.x(), s.v()
    g = lag.metric(x)
    cond = np.linalg.cond(g)
    if cond > 1e8:
        raise IllConditionedError(f"fiber Hessian condition number {cond:.2e}")
    return v, acceleration(lag, x, v)


def el_jacobian(lag: TonelliLagrangian, x: np.ndarray, v: np.ndarray):
    """Acceleration and the 4x4 Jacobian of the phase-space field (v, a).

    All coefficient derivatives are exact (Fourier data), so the Jacobian
    matches finite differences of the field to truncation error.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    g = lag.metric(x)
    dg = lag._metric_dx(x)        # (..., i, j, m)
    hess_u = lag.potential.hess(x)
    da = np.stack([lag.a1.grad(x), lag.a2.grad(x)], axis=-2)    # (..., i, m)
    dda = np.stack([lag.a1.hess(x), lag.a2.hess(x)], axis=-3)   # (..., i, m, n)

    # metric second derivatives, (..., i, j, m, n)
    ddg = lag._metric_dxx(x)

    # F_i = dL/dx_i - sum_m (d2L/dv_i dx_m) v_m
    dLdx = lag.dx(x, v)
    d2vx = np.einsum("...ikm,...k->...im", dg, v) + da
    force = dLdx - np.einsum("...im,...m->...i", d2vx, v)
    a = np.linalg.solve(g, force[..., None])[..., 0]

    # dF/dv_k = (G_i v)_k + dA_k/dx_i - sum_m G_m[i,k] v_m - (G_k v)_i - dA_i/dx_k
    # with dg indexed [i, j, m] = d g_ij / d x_m and (G_m v)_i = dg[i, k, m] v_k
    gmv = np.einsum("...ikm,...k->...im", dg, v)     # [i, m] = (G_m v)_i
    dFdv = (np.swapaxes(gmv, -1, -2)                         # (G_i v)_k at [i, k]
            + np.swapaxes(da, -1, -2)                        # dA_k/dx_i at [i, k]
            - np.einsum("...ikm,...m->...ik", dg, v)         # sum_m G_m[i,k] v_m
            - gmv                                            # (G_k v)_i at [i, k]
            - da)                                            # dA_i/dx_k at [i, k]

    # dF/dx_n = 1/2 v.G_in.v + v.(ddA . )_n - U_in - sum_m (G_mn v)_i v_m - ddA_i v
    quad = 0.5 * np.einsum("...k,...kjin,...j->...in", v, ddg, v)
    lin = np.einsum("...kin,...k->...in", dda, v)            # d/dx_n [dA_k/dx_i v_k]
    gmn = np.einsum("...ikmn,...k,...m->...in", ddg, v, v)   # sum_m (G_mn v)_i v_m
    dda_iv = np.einsum("...imn,...m->...in", dda, v)         # sum_m d2A_i/dx_m dx_n v_m
    dFdx = quad + lin - hess_u - gmn - dda_iv

    # a = g^{-1} F  =>  da/dv = g^{-1} dF/dv,  da/dx_n = g^{-1}(dF/dx_n - G_n a)
    dadv = np.linalg.solve(g, dFdv)
    gna = np.einsum("...ikn,...k->...in", dg, a)
    dadx = np.linalg.solve(g, dFdx - gna)

    jac = np.zeros(x.shape[:-1] + (4, 4))
    jac[..., 0, 2] = 1.0
    jac[..., 1, 3] = 1.0
    jac[..., 2:, :2] = dadx
    jac[..., 2:, 2:] = dadv
    return a, jac


def _rk4_step(lag, x, v, dt):
    k1x, k1v = v, acceleration(lag, x, v)
    k2x, k2v = v + 0.5 * dt * k1v, acceleration(lag, x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
    k3x, k3v = v + 0.5 * dt * k2v, acceleration(lag, x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
    k4x, k4v = v + dt * k3v, acceleration(lag, x + dt * k3x, v + dt * k3v)
    xn = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    vn = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return xn, vn


def _var_field(lag, x, v, m):
    a, jac = el_jacobian(lag, x, v)
    return v, a, np.einsum("...ij,...jk->...ik", jac, m)


def _rk4_step_var(lag, x, v, m, dt):
    k1x, k1v, k1m = _var_field(lag, x, v, m)
    k2x, k2v, k2m = _var_field(lag, x + 0.5 * dt * k1x, v + 0.5 * dt * k1v, m + 0.5 * dt * k1m)
    k3x, k3v, k3m = _var_field(lag, x + 0.5 * dt * k2x, v + 0.5 * dt * k2v, m + 0.5 * dt * k2m)
    k4x, k4v, k4m = _var_field(lag, x + dt * k3x, v + dt * k3v, m + dt * k3m)
    xn = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    vn = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    mn = m + dt / 6.0 * (k1m + 2 * k2m + 2 * k3m + k4m)
    return xn, vn, mn


def _plan_steps(t_final: float, dt: float):
    if dt <= 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    n = max(1, int(round(abs(t_final) / dt)))
    h = t_final / n
    return n, h


def integrate(lag: TonelliLagrangian, s0: TangentState, t_final: float,
              dt: float = 1e-3, store_stride: int = 1,
              energy_budget: float = ENERGY_BUDGET) -> Trajectory:
    """Integrate the EL flow from s0 for time t_final (negative = backward)."""
    n, h = _plan_steps(t_final, dt)
    x = s0.x()[None, :].copy()
    v = s0.v()[None, :].copy()
    times = [0.0]
    lifts = [x[0].copy()]
    vels = [v[0].copy()]
    for i in range(n):
        x, v = _rk4_step(lag, x, v, h)
        if (i + 1) % store_stride == 0 or i == n - 1:
            times.append((i + 1) * h)
            lifts.append(x[0].copy())
            vels.append(v[0].copy())
    times = np.array(times)
    lifts = np.array(lifts)
    vels = np.array(vels)
    energies = lag.energy(lifts, vels)
    _audit_drift(energies, abs(t_final), energy_budget)
    return Trajectory(times, wrap_coords(lifts), vels, lifts, energies)


def _audit_drift(energies, duration, budget):
    drift = float(np.max(np.abs(energies - energies[0])))
    allowed = 100.0 * budget * max(duration, 1.0)
    if drift > allowed:
        raise IntegrationFailureError(
            f"energy drift {drift:.3e} exceeds 100x budget {allowed:.3e}")


def integrate_variational(lag: TonelliLagrangian, s0: TangentState, t_final: float,
                          dt: float = 1e-3, store_stride: int = 1,
                          energy_budget: float = ENERGY_BUDGET):
    """Integrate orbit and linearized flow together; returns (Trajectory, frame).

    The variational equation shares the RK4 stages of the orbit so the
    frame and the orbit see the same discretization.
    """
    n, h = _plan_steps(t_final, dt)
    x = s0.x()[None, :].copy()
    v = s0.v()[None, :].copy()
    m = np.eye(4)[None, :, :].copy()
    times = [0.0]
    lifts = [x[0].copy()]
    vels = [v[0].copy()]
    for i in range(n):
        x, v, m = _rk4_step_var(lag, x, v, m, h)
        if (i + 1) % store_stride == 0 or i == n - 1:
            times.append((i + 1) * h)
            lifts.append(x[0].copy())
            vels.append(v[0].copy())
    times = np.array(times)
    lifts = np.array(lifts)
    vels = np.array(vels)
    energies = lag.energy(lifts, vels)
    _audit_drift(energies, abs(t_final), energy_budget)
    traj = Trajectory(times, wrap_coords(lifts), vels, lifts, energies)
    return traj, TangentFrame(m[0].copy())


def rotation_vector(traj: Trajectory, min_duration: float = 10.0) -> HomologyClass:
    """Displacement over time in the universal cover."""
    if traj.duration < min_duration:
        raise InsufficientDataError(
            f"duration {traj.duration:.3f} below minimum {min_duration}")
    span = traj.times[-1] - traj.times[0]
    rho = (traj.lifts[-1] - traj.lifts[0]) / span
    return HomologyClass(float(rho[0]), float(rho[1]))


def hamiltonian_integrate(lag: TonelliLagrangian, c0: CotangentState, t_final: float,
                          dt: float = 1e-3, store_stride: int = 1,
                          energy_budget: float = ENERGY_BUDGET) -> HamiltonianTrajectory:
    """Integrate the conjugated Hamiltonian flow: xdot = v(x,p), pdot = dL/dx."""
    n, h = _plan_steps(t_final, dt)

    def field(x, p):
        v = np.linalg.solve(lag.metric(x), (p - lag.magnetic_form(x))[..., None])[..., 0]
        return v, lag.dx(x, v)

    x = c0.x()[None, :].copy()
    p = c0.p()[None, :].copy()
    times = [0.0]
    lifts = [x[0].copy()]
    moms = [p[0].copy()]
    for i in range(n):
        k1x, k1p = field(x, p)
        k2x, k2p = field(x + 0.5 * h * k1x, p + 0.5 * h * k1p)
        k3x, k3p = field(x + 0.5 * h * k2x, p + 0.5 * h * k2p)
        k4x, k4p = field(x + h * k3x, p + h * k3p)
        x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        p = p + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        if (i + 1) % store_stride == 0 or i == n - 1:
            times.append((i + 1) * h)
            lifts.append(x[0].copy())
            moms.append(p[0].copy())
    times = np.array(times)
    lifts = np.array(lifts)
    moms = np.array(moms)
    vels = np.linalg.solve(lag.metric(lifts), (moms - lag.magnetic_form(lifts))[..., None])[..., 0]
    energies = lag.energy(lifts, vels)
    _audit_drift(energies, abs(t_final), energy_budget)
    return HamiltonianTrajectory(times, wrap_coords(lifts), moms, lifts, energies)


def integrate_batch(lag: TonelliLagrangian, x0: np.ndarray, v0: np.ndarray,
                    t_final: float, dt: float, store_times: np.ndarray | None = None):
    """Vectorized RK4 over a batch of initial conditions.

    Returns (times, lifts, velocities) with lifts of shape (n_store, n, 2).
    ``store_times`` selects the sample instants (must be multiples of the
    effective step); default stores only the final state.
    """
    n, h = _plan_steps(t_final, dt)
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    if store_times is None:
        store_times = np.array([t_final])
    store_idx = set(int(round(t / h)) for t in store_times if t != 0.0)
    out_t, out_x, out_v = [], [], []
    if 0 in [int(round(t / h)) for t in store_times]:
        out_t.append(0.0)
        out_x.append(x.copy())
        out_v.append(v.copy())
    for i in range(n):
        x, v = _rk4_step(lag, x, v, h)
        if (i + 1) in store_idx:
            out_t.append((i + 1) * h)
            out_x.append(x.copy())
            out_v.append(v.copy())
    return np.array(out_t), np.array(out_x), np.array(out_v)


def export_trajectory_csv(traj: Trajectory, path):
    """Write the trajectory as CSV: t, x1, x2, v1, v2, lift1, lift2, E."""
    with open(path, "w", newline="\n") as fh:
        fh.write("t,x1,x2,v1,v2,lift1,lift2,E\n")
        for i in range(len(traj.times)):
            row = [traj.times[i], *traj.positions[i], *traj.velocities[i],
                   *traj.lifts[i], traj.energies[i]]
            fh.write(",".join(f"{val:.17g}" for val in row) + "\n")
