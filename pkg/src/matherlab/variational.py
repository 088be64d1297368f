"""Discrete action machinery: loop and endpoint minimization, action
potential, Peierls barrier, Aubry semidistance, semi-static residual.

Curves are polygons in the universal cover evaluated with the midpoint
rule on a uniform time grid, which is second order in the node count.
The integral of a constant 1-form over any curve equals its pairing with
the endpoint displacement, so the omega term is always taken exactly
instead of through quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _sp_minimize

from .core import (
    CohomologyClass,
    DiscreteLoop,
    HomologyClass,
    TangentState,
    TorusPoint,
    seam_delta,
    straight_loop,
)
from .errors import ConvergenceError, DegenerateLoopError, InvalidInputError
from .flow import Trajectory
from .lagrangian import TonelliLagrangian

MIN_PATH_NODES = 16


def _as_xy(p) -> np.ndarray:
    if isinstance(p, TorusPoint):
        return p.array()
    if isinstance(p, TangentState):
        return p.x()
    return np.asarray(p, dtype=float)


def _omega_vec(omega) -> np.ndarray:
    if omega is None:
        return np.zeros(2)
    if isinstance(omega, CohomologyClass):
        return omega.array()
    return np.asarray(omega, dtype=float)


def _quad(lag, z, period):
    """Midpoint-rule action of the polygon z ((P+1) x 2) over the period."""
    nseg = len(z) - 1
    dt = period / nseg
    mid = 0.5 * (z[1:] + z[:-1])
    vel = (z[1:] - z[:-1]) / dt
    lvals = lag.value(mid, vel)
    return float(dt * np.sum(lvals)), mid, vel, lvals, dt


def discrete_action(lag: TonelliLagrangian, loop: DiscreteLoop,
                    omega=None, k_offset: float = 0.0) -> float:
    """Action of (L - omega + k_offset) over the loop; exact omega pairing."""
    z = loop.closed_nodes()
    seg = np.linalg.norm(np.diff(z, axis=0), axis=1)
    total = float(np.sum(seg))
    if total > 1e-8 and np.any(seg < 1e-14):
        raise DegenerateLoopError(
            "zero-length segment inside a non-constant loop")
    a_l, *_ = _quad(lag, z, loop.period)
    w = _omega_vec(omega)
    return a_l + k_offset * loop.period - float(w @ loop.displacement())


def _descend(f_and_g, theta0, gtol, bounds=None, maxiter=4000):
    """L-BFGS-B descent with a trust-region Newton polish.

    L-BFGS-B stalls near machine ftol with gradients around 1e-8; the
    polish (Hessian-vector products by differencing the analytic
    gradient) pushes well below the 1e-8 contract.  Descent is monotone:
    the polish result is kept only if it does not increase the value.
    """
    res = _sp_minimize(f_and_g, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": maxiter, "ftol": 1e-18,
                                "gtol": 0.5 * gtol, "maxcor": 20, "maxls": 100})
    theta = res.x
    value, grad = f_and_g(theta)
    at_bound = np.zeros(len(theta), dtype=bool)
    if bounds is not None:
        for i, (lo, hi) in enumerate(bounds):
            if lo is not None and abs(theta[i] - lo) < 1e-12:
                at_bound[i] = True
            if hi is not None and abs(theta[i] - hi) < 1e-12:
                at_bound[i] = True
    free_grad = np.abs(grad[~at_bound])
    if len(free_grad) and np.max(free_grad) > gtol and not at_bound.any():
        def hessp(th, p):
            pn = np.linalg.norm(p)
            if pn == 0.0:
                return np.zeros_like(p)
            h = 1e-7 * (1.0 + np.linalg.norm(th)) / pn
            _, g1 = f_and_g(th + h * p)
            _, g0 = f_and_g(th - h * p)
            return (g1 - g0) / (2 * h)

        try:
            res2 = _sp_minimize(f_and_g, theta, jac=True, hessp=hessp,
                                method="Newton-CG",
                                options={"maxiter": 60, "xtol": 1e-14})
            v2, g2 = f_and_g(res2.x)
            if v2 <= value + 1e-14 * (1 + abs(value)) and np.max(np.abs(g2)) < np.max(free_grad):
                theta, value, grad = res2.x, v2, g2
        except Exception:
            pass
    return theta, value, grad, at_bound


@dataclass
class LoopMinimum:
    loop: DiscreteLoop
    action: float
    converged: bool
    grad_inf: float
    stationarity: float
    hit_period_bound: bool = False
    collapsed: bool = False
    mean_energy: float = 0.0


def _loop_objective(lag, homology_disp, n_nodes, k_offset, free_period):
    """Objective/gradient over flattened free nodes (+ log T when free)."""

    def fun(theta, period):
        if free_period:
            period = float(np.exp(theta[-1]))
            nodes = theta[:-1].reshape(n_nodes, 2)
        else:
            nodes = theta.reshape(n_nodes, 2)
        z = np.vstack([nodes, nodes[0] + homology_disp])
        a_l, mid, vel, _, dt = _quad(lag, z, period)
        lx = lag.dx(mid, vel)
        lv = lag.dv(mid, vel)
        glo = 0.5 * dt * lx - lv
        ghi = 0.5 * dt * lx + lv
        grad = glo.copy()
        grad[0] += ghi[-1]
        grad[1:] += ghi[:-1]
        value = a_l + k_offset * period
        mean_e = float(np.mean(lag.energy(mid, vel)))
        if free_period:
            dlogt = period * (k_offset - mean_e)
            g = np.concatenate([grad.ravel(), [dlogt]])
        else:
            g = grad.ravel()
        return value, g, mean_e, period

    return fun


def minimize_loop(lag: TonelliLagrangian, homology, omega=None,
                  period: float | None = None, free_period: bool = False,
                  k_offset: float = 0.0, n_nodes: int = 128,
                  base=None, seed=None, jitter: float = 0.0,
                  seed_loop: DiscreteLoop | None = None,
                  t_bounds=(0.05, 200.0), gtol: float = 1e-8,
                  maxiter: int = 4000, collapse_tol: float = 1e-6) -> LoopMinimum:
    """Minimize the discrete (L - omega + k_offset)-action over closed loops.

    Descent runs over node positions (and log T in free-period mode) from
    a straight-line seed plus optional jitter.  Contractible collapse is a
    valid outcome and is returned as a constant loop, not an error.
    """
    if isinstance(homology, HomologyClass):
        hom = homology
    else:
        hom = HomologyClass.integer(int(homology[0]), int(homology[1]))
    k, l = hom.ints()
    if (k, l) == (0, 0) and free_period:
        raise InvalidInputError("free-period minimization needs a nonzero class")
    disp = np.array([k, l], dtype=float)

    if seed_loop is not None:
        from .core import resample_loop
        start = resample_loop(seed_loop, n_nodes)
        nodes0 = start.nodes.copy()
        if period is None:
            period = start.period
    else:
        if period is None:
            period = 1.0
        nodes0 = straight_loop(hom, period, n_nodes, base=base).nodes.copy()
    if jitter and seed is not None:
        rng = np.random.default_rng(seed)
        nodes0 = nodes0 + jitter * rng.standard_normal(nodes0.shape)

    obj = _loop_objective(lag, disp, n_nodes, k_offset, free_period)

    if free_period:
        theta0 = np.concatenate([nodes0.ravel(), [np.log(period)]])
        bounds = [(None, None)] * (2 * n_nodes) + [(np.log(t_bounds[0]), np.log(t_bounds[1]))]
    else:
        theta0 = nodes0.ravel()
        bounds = None

    def f_and_g(theta):
        value, g, _, _ = obj(theta, period)
        return value, g

    pgtol = min(gtol, 1e-6 * (period / n_nodes))
    theta, _, g, at_bound = _descend(f_and_g, theta0, pgtol, bounds=bounds,
                                     maxiter=maxiter)
    value, g, mean_e, per = obj(theta, period)
    nodes = (theta[:-1] if free_period else theta).reshape(n_nodes, 2)
    hit_bound = bool(at_bound.any())
    grad_check = np.abs(g[: 2 * n_nodes]) if hit_bound else np.abs(g)
    grad_inf = float(np.max(grad_check))
    dt = per / n_nodes
    stationarity = grad_inf / dt

    loop = DiscreteLoop(nodes, per, hom)
    w = _omega_vec(omega)
    action = value - float(w @ disp)

    collapsed = False
    if (k, l) == (0, 0):
        z = loop.closed_nodes()
        length = float(np.sum(np.linalg.norm(np.diff(z, axis=0), axis=1)))
        if length < max(collapse_tol, 1e-3):
            # collapse onto the best constant loop among the nodes
            vals = lag.value(nodes, np.zeros_like(nodes))
            best = nodes[int(np.argmin(vals))]
            nodes = np.repeat(best[None, :], n_nodes, axis=0)
            loop = DiscreteLoop(nodes, per, hom)
            action = float(per * (lag.value(best, np.zeros(2)) + k_offset))
            collapsed = True
            grad_inf = 0.0
            stationarity = 0.0

    out = LoopMinimum(loop, action, converged=grad_inf <= gtol, grad_inf=grad_inf,
                      stationarity=stationarity, hit_period_bound=hit_bound,
                      collapsed=collapsed, mean_energy=mean_e)
    if not out.converged:
        raise ConvergenceError(
            f"loop minimization stalled: grad_inf {grad_inf:.3e} > {gtol:.1e}",
            best=out)
    return out


# -- endpoint-constrained minimization --------------------------------------

@dataclass
class PotentialValue:
    value: float
    path: np.ndarray            # (P+1, 2) cover nodes, endpoints pinned
    t: float
    translate: tuple
    value_coarse: float = np.nan
    converged: bool = True


def _path_action_grad(lag, interior, x0, y1, t):
    z = np.vstack([x0, interior, y1])
    a_l, mid, vel, _, dt = _quad(lag, z, t)
    lx = lag.dx(mid, vel)
    lv = lag.dv(mid, vel)
    glo = 0.5 * dt * lx - lv
    ghi = 0.5 * dt * lx + lv
    grad = glo[1:] + ghi[:-1]
    return a_l, grad


def _minimize_path(lag, x0, y1, t, seed_path, gtol=1e-8, maxiter=4000):
    nfree = len(seed_path) - 2
    theta0 = seed_path[1:-1].ravel()

    def f_and_g(theta):
        interior = theta.reshape(nfree, 2)
        val, grad = _path_action_grad(lag, interior, x0, y1, t)
        return val, grad.ravel()

    theta, val, grad, _ = _descend(f_and_g, theta0, gtol, maxiter=maxiter)
    path = np.vstack([x0, theta.reshape(nfree, 2), y1])
    return val, path, float(np.max(np.abs(grad)))


def _near_translates(radius: int = 1):
    offs = range(-radius, radius + 1)
    return [(a, b) for a in offs for b in offs]


def _resample_polyline(points: np.ndarray, n: int) -> np.ndarray:
    """Equal-arclength resample to n+1 points, endpoints preserved."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0:
        return np.repeat(points[:1], n + 1, axis=0)
    targets = np.linspace(0.0, s[-1], n + 1)
    out = np.empty((n + 1, 2))
    out[:, 0] = np.interp(targets, s, points[:, 0])
    out[:, 1] = np.interp(targets, s, points[:, 1])
    return out


def _winding_seed(witness: DiscreteLoop, x0, y1, m: int, n_nodes: int):
    """Polyline seed that follows the witness loop m times between x0 and y1."""
    w = witness.closed_nodes()
    disp = witness.displacement()
    start = w[0] + seam_delta(w[0], x0)
    pieces = [np.array([x0])]
    offset = start - w[0]
    for j in range(m):
        pieces.append(w[:-1] + offset + j * disp)
    last = w[0] + offset + m * disp
    pieces.append(np.array([last]))
    pieces.append(np.array([y1]))
    poly = np.vstack(pieces)
    out = _resample_polyline(poly, n_nodes)
    out[0] = x0
    out[-1] = y1
    return out


def action_potential(lag: TonelliLagrangian, x, y, t: float, omega=None,
                     nodes_per_unit: float = 16.0, min_nodes: int = MIN_PATH_NODES,
                     translates=None, extra_seeds=(), richardson: bool = False,
                     gtol: float = 1e-8) -> PotentialValue:
    """Least (L - omega)-action over discrete curves from x to y in time t.

    Multi-starts over the 9 deck translates of y nearest x by default;
    callers chasing winding minimizers extend ``translates`` /
    ``extra_seeds`` (the Peierls barrier does).
    """
    if t <= 0:
        raise InvalidInputError(f"action potential needs t > 0, got {t}")
    x0 = _as_xy(x)
    y_raw = _as_xy(y)
    y_near = x0 + seam_delta(x0, y_raw)
    w = _omega_vec(omega)
    n_nodes = max(min_nodes, int(np.ceil(t * nodes_per_unit)))

    cands = []
    for (a, b) in (translates if translates is not None else _near_translates()):
        y1 = y_near + np.array([a, b], dtype=float)
        seed = np.linspace(0.0, 1.0, n_nodes + 1)[:, None] * (y1 - x0) + x0
        cands.append(((a, b), y1, seed))
    for (a, b), seed_path in extra_seeds:
        y1 = y_near + np.array([a, b], dtype=float)
        seed = _resample_polyline(np.asarray(seed_path, dtype=float), n_nodes)
        seed[0], seed[-1] = x0, y1
        cands.append(((a, b), y1, seed))

    best = None
    failures = 0
    for key, y1, seed in cands:
        try:
            val, path, _ = _minimize_path(lag, x0, y1, t, seed, gtol=gtol)
        except Exception:
            failures += 1
            continue
        total = val - float(w @ (y1 - x0))
        if best is None or total < best.value:
            best = PotentialValue(total, path, t, key)
    if best is None:
        raise ConvergenceError(f"all {failures} endpoint starts failed at t={t}")

    if richardson:
        coarse = best.value
        fine_seed = _resample_polyline(best.path, 2 * (len(best.path) - 1))
        y1 = best.path[-1]
        fine_seed[0], fine_seed[-1] = x0, y1
        val2, path2, _ = _minimize_path(lag, x0, y1, t, fine_seed, gtol=gtol)
        fine = val2 - float(w @ (y1 - x0))
        best = PotentialValue((4.0 * fine - coarse) / 3.0, path2, t,
                              best.translate, value_coarse=coarse)
    return best


@dataclass
class BarrierSample:
    x: np.ndarray
    y: np.ndarray
    omega: np.ndarray
    alpha: float
    t_grid: np.ndarray
    values: np.ndarray          # Phi + alpha t per grid point (nan on failure)
    running_min: np.ndarray
    estimate: float
    statuses: list = field(default_factory=list)


def default_t_grid(t_min: float = 5.0, t_max: float = 80.0, points: int = 16):
    return np.geomspace(t_min, t_max, points)


def peierls_barrier(lag: TonelliLagrangian, x, y, omega, alpha: float,
                    t_grid=None, winding: HomologyClass | None = None,
                    witness: DiscreteLoop | None = None,
                    nodes_per_unit: float = 16.0, richardson: bool = True,
                    translate_radius: int = 1) -> BarrierSample:
    """Finite-grid surrogate of the barrier liminf for L - omega.

    The estimate is the running minimum of Phi + alpha t over the tail
    half of the grid; the full value list is kept so the trend toward the
    liminf can be inspected.  When the minimizing arcs wind (they do on
    the Aubry candidates), pass the witness loop so translates of y that
    follow it enter the multi-start.
    """
    t_grid = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    if t_grid[-1] < 20.0:
        raise InvalidInputError("t_grid must extend to at least 20")
    x0 = _as_xy(x)
    y_raw = _as_xy(y)
    w = _omega_vec(omega)
    values = np.full(len(t_grid), np.nan)
    statuses = []
    for i, t in enumerate(t_grid):
        translates = list(_near_translates(translate_radius))
        extra_seeds = []
        if witness is not None and winding is not None:
            disp = np.array(winding.ints(), dtype=float)
            period = witness.period
            m_center = int(round(t / period))
            y_near = x0 + seam_delta(x0, y_raw)
            for m in {max(1, m_center - 1), max(1, m_center), m_center + 1}:
                target = x0 + m * disp
                off = target - y_near
                key = (int(round(off[0])), int(round(off[1])))
                seed = _winding_seed(witness, x0, y_near + np.array(key, float),
                                     m, max(MIN_PATH_NODES, int(t * nodes_per_unit)))
                extra_seeds.append((key, seed))
        try:
            pv = action_potential(lag, x0, y_raw, float(t), omega,
                                  nodes_per_unit=nodes_per_unit,
                                  translates=translates, extra_seeds=extra_seeds,
                                  richardson=richardson)
            values[i] = pv.value + alpha * t
            statuses.append("ok")
        except ConvergenceError as exc:
            statuses.append(f"failed: {exc}")
    running = np.fmin.accumulate(np.where(np.isnan(values), np.inf, values))
    tail = values[len(values) // 2:]
    tail = tail[~np.isnan(tail)]
    estimate = float(np.min(tail)) if len(tail) else float("nan")
    return BarrierSample(x0, y_raw, w, alpha, t_grid, values, running,
                         estimate, statuses)


def aubry_semidistance(lag: TonelliLagrangian, x, y, omega, alpha: float,
                       t_grid=None, **kwargs) -> float:
    """Symmetrized barrier h(x,y) + h(y,x); symmetric by construction."""
    fwd = peierls_barrier(lag, x, y, omega, alpha, t_grid, **kwargs)
    bwd = peierls_barrier(lag, y, x, omega, alpha, t_grid, **kwargs)
    return fwd.estimate + bwd.estimate


def _segment_nodes(segment: Trajectory, n: int) -> np.ndarray:
    """Equal-time resample of the segment's lift polyline to n+1 nodes."""
    ts = np.linspace(segment.times[0], segment.times[-1], n + 1)
    out = np.empty((n + 1, 2))
    out[:, 0] = np.interp(ts, segment.times, segment.lifts[:, 0])
    out[:, 1] = np.interp(ts, segment.times, segment.lifts[:, 1])
    return out


def semistatic_residual(lag: TonelliLagrangian, segment: Trajectory, omega,
                        alpha: float, t_grid=None, nodes_per_unit: float = 16.0,
                        richardson: bool = True) -> float:
    """Gap between the segment's deformed action and the best reconnection.

    Residual = A_{L-omega+alpha}(segment) - inf_t { Phi(x, y, t) + alpha t }
    evaluated with the same discretization on both sides; near zero marks
    semi-static (Mane set) candidates.
    """
    duration = segment.duration
    if duration < 1.0:
        raise InvalidInputError(f"segment duration {duration:.3f} < 1")
    w = _omega_vec(omega)
    n = max(MIN_PATH_NODES, int(np.ceil(duration * nodes_per_unit)))
    z = _segment_nodes(segment, n)
    a_l, *_ = _quad(lag, z, duration)
    seg_act = a_l - float(w @ (z[-1] - z[0])) + alpha * duration
    if richardson:
        z2 = _segment_nodes(segment, 2 * n)
        a_l2, *_ = _quad(lag, z2, duration)
        fine = a_l2 - float(w @ (z2[-1] - z2[0])) + alpha * duration
        seg_act = (4.0 * fine - seg_act) / 3.0

    x0, y1 = z[0], z[-1]
    if t_grid is None:
        t_grid = np.unique(np.concatenate([
            np.geomspace(max(0.5, 0.5 * duration), 2.0 * duration, 7), [duration]]))
    disp = y1 - x0
    y_near = x0 + seam_delta(x0, y1)
    own_key = (int(round(disp[0] - (y_near - x0)[0])), int(round(disp[1] - (y_near - x0)[1])))

    best = np.inf
    for t in t_grid:
        n_t = max(MIN_PATH_NODES, int(np.ceil(t * nodes_per_unit)))
        seed = _resample_polyline(z, n_t)
        seed[0] = x0
        seed[-1] = y_near + np.array(own_key, dtype=float)
        extra = [(own_key, seed)]
        pv = action_potential(lag, x0, y1, float(t), omega,
                              nodes_per_unit=nodes_per_unit,
                              extra_seeds=extra, richardson=richardson)
        best = min(best, pv.value + alpha * float(t))
    return float(seg_act - best)
