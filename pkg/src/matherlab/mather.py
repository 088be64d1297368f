"""Mather's beta and alpha functions, the strict critical value, and the
search for a cohomology class whose alpha value hits a prescribed energy.

Minimizing measures are represented by periodic-orbit and fixed-point
surrogates throughout: a rational rotation vector (p,q)/n is realized by
a closed loop of homology (p,q) and period n, so beta reduces to a
fixed-period loop minimization and alpha to its convex dual on a rational
grid plus a free-period refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize as _sp_minimize

from .core import CohomologyClass, DiscreteLoop, HomologyClass, resample_loop
from .errors import BelowCriticalError, BracketingError, ConvergenceError
from .lagrangian import TonelliLagrangian
from .tasks import run_tasks, task_seed
from .variational import LoopMinimum, _descend, _loop_objective, minimize_loop


@dataclass
class BetaSample:
    h: tuple                   # rotation vector as floats (p/n, q/n)
    p: int
    q: int
    n: int
    beta: float
    witness: DiscreteLoop
    witness_period: float
    mean_energy: float


@dataclass
class AlphaSample:
    omega: CohomologyClass
    alpha: float
    witness: DiscreteLoop | None
    h_star: tuple
    grid_value: float


@dataclass
class CriticalValue:
    value: float
    cross_check: float
    warning: str | None = None

    def __float__(self):
        return self.value


def reduce_rational(h, max_den: int = 64):
    """Rational rotation vector -> reduced (p, q, n) with gcd(p, q, n) = 1."""
    if isinstance(h, HomologyClass):
        h = (h.h1, h.h2)
    f1 = Fraction(h[0]).limit_denominator(max_den)
    f2 = Fraction(h[1]).limit_denominator(max_den)
    n = math.lcm(f1.denominator, f2.denominator)
    p = f1.numerator * (n // f1.denominator)
    q = f2.numerator * (n // f2.denominator)
    g = math.gcd(math.gcd(abs(p), abs(q)), n)
    return p // g, q // g, n // g


def _transverse_bases(direction: np.ndarray, count: int):
    """Seed base points spread across the direction transverse to the class."""
    norm = np.linalg.norm(direction)
    perp = (np.array([-direction[1], direction[0]]) / norm
            if norm > 0 else np.array([1.0, 0.0]))
    return [(i / count) * perp for i in range(count)]


def _fixed_point_beta(lag: TonelliLagrangian, period: float, n_nodes: int):
    """beta(0): Dirac measures at rest points; minimize L(x, 0) over the torus."""
    m = 128
    xs = np.arange(m) / m
    grid = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1).reshape(-1, 2)
    vals = lag.value(grid, np.zeros_like(grid))
    x0 = grid[int(np.argmin(vals))]

    def fg(x):
        return (float(lag.value(x, np.zeros(2))),
                lag.dx(x, np.zeros(2)) * -1.0)

    res = _sp_minimize(fg, x0, jac=True, method="L-BFGS-B",
                       options={"ftol": 1e-18, "gtol": 1e-12})
    beta = float(res.fun)
    nodes = np.repeat(res.x[None, :], n_nodes, axis=0)
    witness = DiscreteLoop(nodes, period, HomologyClass.integer(0, 0))
    return BetaSample((0.0, 0.0), 0, 0, 1, beta, witness, period,
                      float(lag.energy(res.x, np.zeros(2))))


def beta_at(lag: TonelliLagrangian, h, starts: int = 8, seed: int = 0,
            n_nodes: int = 128, workers: int | None = None,
            seed_loop: DiscreteLoop | None = None,
            period_override: float | None = None) -> BetaSample:
    """Minimal average action among loops with rotation vector h (rational).

    A loop of homology (p,q) and period n has rotation vector (p,q)/n, so
    the period is pinned to the reduced denominator (or its override for
    continuous-parameter sweeps along a line of classes).
    """
    p, q, n = reduce_rational(h)
    if (p, q) == (0, 0):
        return _fixed_point_beta(lag, period_override or float(max(n, 1)), n_nodes)
    period = period_override if period_override is not None else float(n)
    hom = HomologyClass.integer(p, q)

    def make_task(i, base):
        def task():
            return minimize_loop(lag, hom, period=period, n_nodes=n_nodes,
                                 base=np.asarray(base), seed=task_seed(seed, i),
                                 jitter=0.02 if i else 0.0,
                                 seed_loop=seed_loop if i == 0 else None)
        return task

    bases = _transverse_bases(np.array([p, q], float), max(1, starts))
    results = run_tasks([make_task(i, b) for i, b in enumerate(bases)], workers)
    best: LoopMinimum | None = None
    for r in results:
        if isinstance(r, ConvergenceError) and isinstance(r.best, LoopMinimum):
            continue
        if isinstance(r, Exception):
            continue
        if best is None or r.action < best.action:
            best = r
    if best is None:
        raise ConvergenceError(f"all {starts} starts failed for beta at {(p, q, n)}")
    return BetaSample((p / n, q / n), p, q, n, best.action / period,
                      best.loop, period, best.mean_energy)


def rational_grid(max_den: int = 2, radius: int = 2, include_zero: bool = True):
    """Reduced rational classes (p/n, q/n) with |h| <= radius, den <= max_den."""
    seen = {}
    for n in range(1, max_den + 1):
        for p in range(-radius * n, radius * n + 1):
            for q in range(-radius * n, radius * n + 1):
                if (p, q) == (0, 0):
                    continue
                if math.hypot(p / n, q / n) > radius + 1e-12:
                    continue
                key = reduce_rational((Fraction(p, n), Fraction(q, n)))
                seen[key] = (key[0] / key[2], key[1] / key[2])
    grid = sorted(seen.values())
    if include_zero:
        grid.insert(0, (0.0, 0.0))
    return grid


class BetaCache:
    """Memoized beta samples keyed by the reduced rational class."""

    def __init__(self, lag: TonelliLagrangian, starts: int = 4, seed: int = 0,
                 n_nodes: int = 128, workers: int | None = None):
        self.lag = lag
        self.starts = starts
        self.seed = seed
        self.n_nodes = n_nodes
        self.workers = workers
        self.samples: dict = {}

    def at(self, h) -> BetaSample:
        key = reduce_rational(h)
        if key not in self.samples:
            self.samples[key] = beta_at(self.lag, h, starts=self.starts,
                                        seed=self.seed, n_nodes=self.n_nodes,
                                        workers=self.workers)
        return self.samples[key]


def minimize_average_action(lag: TonelliLagrangian, homology, omega,
                            period0: float, n_nodes: int = 128,
                            seed_loop: DiscreteLoop | None = None,
                            t_bounds=(0.05, 200.0), gtol: float = 1e-8):
    """Free-period minimization of the average (L - omega)-action of a loop.

    Used to refine the Fenchel supremum off the rational grid: the
    optimal period realizes the true rotation-vector magnitude.
    """
    hom = (homology if isinstance(homology, HomologyClass)
           else HomologyClass.integer(*homology))
    k, l = hom.ints()
    disp = np.array([k, l], dtype=float)
    w = omega.array() if isinstance(omega, CohomologyClass) else np.asarray(omega, float)
    c_w = float(w @ disp)
    obj = _loop_objective(lag, disp, n_nodes, 0.0, True)

    if seed_loop is not None:
        nodes0 = resample_loop(seed_loop, n_nodes).nodes
    else:
        from .core import straight_loop
        nodes0 = straight_loop(hom, period0, n_nodes).nodes
    theta0 = np.concatenate([nodes0.ravel(), [np.log(period0)]])
    bounds = [(None, None)] * (2 * n_nodes) + [(np.log(t_bounds[0]), np.log(t_bounds[1]))]

    def f_and_g(theta):
        a_l, g, mean_e, period = obj(theta, None)
        f = (a_l - c_w) / period
        grad = g.copy()
        grad[:-1] /= period
        grad[-1] = -(mean_e + f) * 1.0  # d f / d log T = -(Ebar + f)
        return f, grad

    theta, value, grad, at_bound = _descend(f_and_g, theta0, gtol, bounds=bounds)
    period = float(np.exp(theta[-1]))
    nodes = theta[:-1].reshape(n_nodes, 2)
    loop = DiscreteLoop(nodes, period, hom)
    return value, loop, bool(at_bound.any())


def alpha_at(lag: TonelliLagrangian, omega, h_grid=None,
             beta_cache: BetaCache | None = None, refine: bool = True,
             seed: int = 0) -> AlphaSample:
    """alpha([omega]) = sup_h { <omega, h> - beta(h) } over a rational grid,
    refined by free-period minimization of the average deformed action."""
    w = omega if isinstance(omega, CohomologyClass) else CohomologyClass(*omega)
    cache = beta_cache or BetaCache(lag, seed=seed)
    grid = h_grid if h_grid is not None else rational_grid()
    best_val, best_h, best_sample = -np.inf, (0.0, 0.0), None
    for h in grid:
        sample = cache.at(h)
        val = w.w1 * h[0] + w.w2 * h[1] - sample.beta
        if val > best_val:
            best_val, best_h, best_sample = val, h, sample
    alpha = best_val
    witness = best_sample.witness if best_sample is not None else None
    if refine and best_sample is not None and (best_sample.p, best_sample.q) != (0, 0):
        avg, loop, hit = minimize_average_action(
            lag, (best_sample.p, best_sample.q), w, best_sample.witness_period,
            seed_loop=best_sample.witness)
        if not hit and -avg > alpha:
            alpha, witness = -avg, loop
    return AlphaSample(w, float(alpha), witness, best_h, float(best_val))


def critical_value(lag: TonelliLagrangian, beta_cache: BetaCache | None = None,
                   omega_grid=None, check_tol: float = 1e-2,
                   seed: int = 0) -> CriticalValue:
    """Strict critical value c0 = -beta(0), cross-checked against min alpha."""
    cache = beta_cache or BetaCache(lag, seed=seed)
    c0 = -cache.at((0.0, 0.0)).beta
    omegas = omega_grid if omega_grid is not None else [
        (0.0, 0.0), (0.25, 0.0), (-0.25, 0.0), (0.0, 0.25), (0.0, -0.25)]
    alphas = [alpha_at(lag, w, beta_cache=cache, refine=False).alpha for w in omegas]
    cross = float(min(alphas))
    warning = None
    if abs(cross - c0) > check_tol:
        warning = (f"min-alpha cross-check {cross:.6f} disagrees with "
                   f"-beta(0) = {c0:.6f} beyond {check_tol}")
    return CriticalValue(float(c0), cross, warning)


@dataclass
class OmegaForEnergy:
    omega: CohomologyClass
    lambda0: float
    witness: LoopMinimum
    energy: float
    validation_gap: float
    line_slope: float
    transverse_slope: float
    brackets: list = field(default_factory=list)


def _complement_class(p: int, q: int):
    """Primitive integer e with det([h0, e]) = +-1 (basis completion)."""
    g = math.gcd(abs(p), abs(q))
    if g == 0:
        raise BelowCriticalError("h0 must be nonzero")
    p, q = p // g, q // g
    # find (e1, e2) with p*e2 - q*e1 = 1
    if p == 0:
        return (int(np.sign(q)) * -1 * 0 + 1, 0) if q != 0 else (0, 1)
    if q == 0:
        return (0, int(np.sign(p)))
    # extended euclid on (p, q)
    a, b = abs(p), abs(q)
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        quo = old_r // r
        old_r, r = r, old_r - quo * r
        old_s, s = s, old_s - quo * s
        old_t, t = t, old_t - quo * t
    # old_s*a + old_t*b = gcd = 1 -> p*e2 - q*e1 = 1 with sign fixes
    e2 = old_s * int(np.sign(p))
    e1 = -old_t * int(np.sign(q))
    assert p * e2 - q * e1 in (1, -1)
    return (e1, e2)


def omega_for_energy(lag: TonelliLagrangian, c: float, h0,
                     c0: float | None = None, margin: float = 1e-3,
                     energy_tol: float = 1e-4, starts: int = 4, seed: int = 0,
                     n_nodes: int = 128, workers: int | None = None,
                     transverse_rep: int = 4, slope_step: float = 2e-4,
                     validate: bool = True, beta_cache: BetaCache | None = None):
    """Find omega0 with alpha([omega0]) = c by bisecting the line lambda*h0.

    For each lambda the minimizing loop of rotation lambda*h0 (class h0,
    period 1/lambda) is computed and its mean energy compared with c; the
    energy is monotone along the line for the families treated here, and
    a non-monotone bracket aborts loudly.  The cohomology class is then
    assembled from the one-sided secant slope along the line and a
    two-point transverse stencil.
    """
    cache = beta_cache or BetaCache(lag, starts=starts, seed=seed, n_nodes=n_nodes,
                                    workers=workers)
    if c0 is None:
        c0 = critical_value(lag, beta_cache=cache, seed=seed).value
    if c <= c0 + margin:
        raise BelowCriticalError(
            f"energy {c} is not above c0 = {c0:.6f} by margin {margin}")
    hom = (h0 if isinstance(h0, HomologyClass) else HomologyClass.integer(*h0))
    p, q = hom.ints()
    if (p, q) == (0, 0):
        raise BelowCriticalError("h0 must be a nonzero class")
    hnorm = math.hypot(p, q)

    evals: dict[float, LoopMinimum] = {}

    def energy_at(lam: float, seed_loop=None) -> LoopMinimum:
        if lam in evals:
            return evals[lam]
        res = minimize_loop(lag, hom, period=1.0 / lam, n_nodes=n_nodes,
                            seed_loop=seed_loop, seed=task_seed(seed, 0),
                            jitter=0.0)
        evals[lam] = res
        return res

    # bracket the target energy; expand geometrically from the flat guess
    lam = math.sqrt(2.0 * max(c, 1e-9)) / hnorm
    brackets = []
    lo, hi = lam, lam
    r_lo = energy_at(lo)
    r_hi = r_lo
    for _ in range(60):
        if r_lo.mean_energy <= c:
            break
        lo /= 1.5
        r_lo = energy_at(lo, seed_loop=r_lo.loop)
    for _ in range(60):
        if r_hi.mean_energy >= c:
            break
        hi *= 1.5
        r_hi = energy_at(hi, seed_loop=r_hi.loop)
    brackets.append((lo, r_lo.mean_energy))
    brackets.append((hi, r_hi.mean_energy))
    if not (r_lo.mean_energy <= c <= r_hi.mean_energy):
        raise BracketingError(
            f"could not bracket energy {c} along lambda*h0", samples=brackets)

    best = r_lo if abs(r_lo.mean_energy - c) < abs(r_hi.mean_energy - c) else r_hi
    lam0 = lo if best is r_lo else hi
    for _ in range(80):
        if abs(best.mean_energy - c) <= energy_tol or (hi - lo) < 1e-13 * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        r_mid = energy_at(mid, seed_loop=best.loop)
        brackets.append((mid, r_mid.mean_energy))
        if r_mid.mean_energy < c:
            lo, r_lo = mid, r_mid
        else:
            hi, r_hi = mid, r_mid
        if abs(r_mid.mean_energy - c) < abs(best.mean_energy - c):
            best, lam0 = r_mid, mid
    if abs(best.mean_energy - c) > 10 * energy_tol:
        raise BracketingError(
            f"bisection stalled at |E - c| = {abs(best.mean_energy - c):.2e}",
            samples=brackets)

    # one-sided secant along the line (subderivative from below)
    beta0 = best.action * lam0  # average action at period 1/lam0
    dl = max(slope_step, slope_step * lam0)
    lam_m = lam0 - dl
    r_m = energy_at(lam_m, seed_loop=best.loop)
    beta_m = r_m.action * lam_m
    line_slope = (beta0 - beta_m) / (dl * hnorm)  # d beta / d (lambda |h0|)

    # transverse two-point stencil on tilted integer classes
    e = _complement_class(p, q)
    rep = transverse_rep
    period_t = rep / lam0
    tilt_vals = {}
    for j in (+1, -1):
        tilt_hom = HomologyClass.integer(rep * p + j * e[0], rep * q + j * e[1])
        seed_nodes = np.vstack([best.loop.nodes + i * best.loop.displacement()
                                for i in range(rep)])
        shear = np.linspace(0.0, 1.0, rep * best.loop.n_nodes, endpoint=False)[:, None]
        seed_nodes = seed_nodes + shear * j * np.array(e, dtype=float)
        seed_loop = DiscreteLoop(seed_nodes, period_t, tilt_hom)
        res = minimize_loop(lag, tilt_hom, period=period_t,
                            n_nodes=rep * best.loop.n_nodes // 2,
                            seed_loop=seed_loop)
        tilt_vals[j] = res.action / period_t
    tau = lam0 / rep
    transverse_slope = (tilt_vals[+1] - tilt_vals[-1]) / (2.0 * tau)

    # solve <w, h0/|h0|> = line_slope, <w, e> = transverse_slope
    mat = np.array([[p / hnorm, q / hnorm], [e[0], e[1]]], dtype=float)
    w_vec = np.linalg.solve(mat, np.array([line_slope, transverse_slope]))
    omega0 = CohomologyClass(float(w_vec[0]), float(w_vec[1]))

    gap = np.nan
    if validate:
        alpha0 = alpha_at(lag, omega0, beta_cache=cache, seed=seed)
        gap = abs(alpha0.alpha - c)
    return OmegaForEnergy(omega0, float(lam0), best, float(best.mean_energy),
                          float(gap), float(line_slope), float(transverse_slope),
                          brackets)


@dataclass
class MatherSetProxy:
    orbits: list
    loops: list
    actions: list
    status: str                  # "finite" | "non-isolated"
    omega: CohomologyClass
    energy: float
    lambda0: float
    rho_bounds: tuple = (np.nan, np.nan)
    min_pairwise_distance: float = np.inf
    dropped: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.orbits)


def _loop_hausdorff(a: DiscreteLoop, b: DiscreteLoop) -> float:
    """Symmetric Hausdorff distance between wrapped node sets."""
    from .core import wrap_coords
    pa = wrap_coords(a.nodes)
    pb = wrap_coords(b.nodes)
    d = pa[:, None, :] - pb[None, :, :]
    d -= np.round(d)
    dist = np.linalg.norm(d, axis=-1)
    return float(max(dist.min(axis=1).max(), dist.min(axis=0).max()))


def mather_set_proxy(lag: TonelliLagrangian, ofe: OmegaForEnergy, h0,
                     starts: int = 32, seed: int = 0, n_nodes: int = 128,
                     cluster_tol: float = 1e-3, action_tol: float = 1e-6,
                     workers: int | None = None, refine: bool = True,
                     refine_kwargs=None) -> MatherSetProxy:
    """Multi-start realization of the Mather set at omega0 as closed orbits.

    Distinct minimizers are clustered by loop Hausdorff distance; a
    translation-degenerate family (flat metric) is reported as status
    "non-isolated" instead of a finite list.  Finite clusters are refined
    into flow-accurate orbits and checked for equal deformed action, the
    prescribed energy level and pairwise-disjoint projections.
    """
    hom = h0 if isinstance(h0, HomologyClass) else HomologyClass.integer(*h0)
    p, q = hom.ints()
    period = 1.0 / ofe.lambda0
    w = ofe.omega

    def make_task(i, base):
        def task():
            return minimize_loop(lag, hom, period=period, n_nodes=n_nodes,
                                 base=np.asarray(base), seed=task_seed(seed, i),
                                 jitter=0.01)
        return task

    bases = _transverse_bases(np.array([p, q], float), starts)
    results = run_tasks([make_task(i, b) for i, b in enumerate(bases)], workers)
    mins = [r for r in results if isinstance(r, LoopMinimum)]
    if not mins:
        raise ConvergenceError(f"all {starts} proxy starts failed")

    clusters: list[LoopMinimum] = []
    for r in mins:
        for j, rep in enumerate(clusters):
            if _loop_hausdorff(r.loop, rep.loop) < cluster_tol:
                if r.action < rep.action:
                    clusters[j] = r
                break
        else:
            clusters.append(r)

    actions = np.array([r.action for r in clusters])
    spread = float(actions.max() - actions.min()) if len(actions) else 0.0
    if len(clusters) > max(4, starts // 2) and spread < 1e-6:
        return MatherSetProxy([], [r.loop for r in clusters],
                              list(map(float, actions)), "non-isolated",
                              w, ofe.energy, ofe.lambda0)

    best_action = float(actions.min())
    keep, dropped = [], []
    for r in clusters:
        (keep if r.action <= best_action + action_tol else dropped).append(r)

    orbits = []
    if refine:
        from .orbits import refine_orbit
        kw = refine_kwargs or {}
        for r in keep:
            orbits.append(refine_orbit(lag, r.loop, energy=ofe.energy, **kw))

    loops = [r.loop for r in keep]
    rho_norms = [hom.norm() / (o.period if orbits else period) for o in (orbits or keep)]
    rho_bounds = (float(min(rho_norms)), float(max(rho_norms))) if rho_norms else (np.nan, np.nan)

    min_pair = np.inf
    for i in range(len(loops)):
        for j in range(i + 1, len(loops)):
            min_pair = min(min_pair, _loop_hausdorff(loops[i], loops[j]))

    return MatherSetProxy(orbits, loops, [float(r.action) for r in keep], "finite",
                          w, ofe.energy, ofe.lambda0, rho_bounds,
                          float(min_pair), [r.loop for r in dropped])
