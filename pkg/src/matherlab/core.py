"""Torus geometry: wrapping, universal-cover lifts, homology bookkeeping.

All positions live either on the torus (canonical representative in
[0,1)^2) or in the universal cover R^2.  Loop closure is stored as an
exact integer displacement, never reconstructed from floats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousLiftError, InvalidInputError, ResolutionError

MIN_LOOP_NODES = 8


@dataclass(frozen=True)
class TorusPoint:
    """Configuration point with canonical coordinates in [0,1)^2."""

    x1: float
    x2: float

    def __post_init__(self):
        if not (np.isfinite(self.x1) and np.isfinite(self.x2)):
            raise InvalidInputError(f"non-finite torus point ({self.x1}, {self.x2})")

    def array(self) -> np.ndarray:
        return np.array([self.x1, self.x2], dtype=float)


@dataclass(frozen=True)
class LiftedPoint:
    """Point in the universal cover R^2."""

    x1: float
    x2: float

    def __post_init__(self):
        if not (np.isfinite(self.x1) and np.isfinite(self.x2)):
            raise InvalidInputError(f"non-finite lifted point ({self.x1}, {self.x2})")

    def array(self) -> np.ndarray:
        return np.array([self.x1, self.x2], dtype=float)


@dataclass(frozen=True)
class TangentState:
    """Phase point (x, v) on the tangent bundle."""

    point: TorusPoint
    v1: float
    v2: float

    def __post_init__(self):
        if not (np.isfinite(self.v1) and np.isfinite(self.v2)):
            raise InvalidInputError(f"non-finite velocity ({self.v1}, {self.v2})")

    @classmethod
    def make(cls, x1, x2, v1, v2) -> "TangentState":
        return cls(wrap_xy(x1, x2), float(v1), float(v2))

    def x(self) -> np.ndarray:
        return self.point.array()

    def v(self) -> np.ndarray:
        return np.array([self.v1, self.v2], dtype=float)


@dataclass(frozen=True)
class CotangentState:
    """Phase point (x, p) on the cotangent bundle."""

    point: TorusPoint
    p1: float
    p2: float

    def __post_init__(self):
        if not (np.isfinite(self.p1) and np.isfinite(self.p2)):
            raise InvalidInputError(f"non-finite momentum ({self.p1}, {self.p2})")

    def x(self) -> np.ndarray:
        return self.point.array()

    def p(self) -> np.ndarray:
        return np.array([self.p1, self.p2], dtype=float)


@dataclass(frozen=True)
class HomologyClass:
    """First-homology class in the (1,0)/(0,1) basis; flags exact integrality."""

    h1: float
    h2: float
    integral: bool = False

    @classmethod
    def integer(cls, k: int, l: int) -> "HomologyClass":
        return cls(float(k), float(l), integral=True)

    def ints(self) -> tuple[int, int]:
        if not self.integral:
            raise InvalidInputError("homology class is not flagged integral")
        return int(round(self.h1)), int(round(self.h2))

    def array(self) -> np.ndarray:
        return np.array([self.h1, self.h2], dtype=float)

    def norm(self) -> float:
        return float(np.hypot(self.h1, self.h2))


@dataclass(frozen=True)
class CohomologyClass:
    """Constant 1-form w1*dx1 + w2*dx2 representing a first-cohomology class."""

    w1: float
    w2: float

    def array(self) -> np.ndarray:
        return np.array([self.w1, self.w2], dtype=float)


def pairing(omega: CohomologyClass, h: HomologyClass) -> float:
    """Bilinear pairing <[omega], h> = w1*h1 + w2*h2, exact for integer input."""
    return omega.w1 * h.h1 + omega.w2 * h.h2


def wrap_coords(x: np.ndarray) -> np.ndarray:
    """Reduce cover coordinates mod 1 into [0,1)^2 (vectorized)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("non-finite coordinates passed to wrap")
    return x - np.floor(x)


def wrap_xy(x1: float, x2: float) -> TorusPoint:
    w = wrap_coords(np.array([x1, x2], dtype=float))
    return TorusPoint(float(w[0]), float(w[1]))


def wrap(p: LiftedPoint | TorusPoint) -> TorusPoint:
    """Quotient projection R^2 -> T^2; idempotent."""
    return wrap_xy(p.x1, p.x2)


def seam_delta(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal-displacement representative of b - a, componentwise in (-1/2, 1/2]."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    return d - np.round(d)


def torus_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance on the torus via the seam-minimal displacement."""
    return float(np.linalg.norm(seam_delta(a, b)))


def continuous_lift(trajectory, initial_lift: LiftedPoint, max_step: float = 0.5):
    """Lift a torus trajectory to the cover by minimal per-step displacement.

    Raises AmbiguousLiftError when a step reaches ``max_step`` in some
    coordinate: silent seam errors would corrupt rotation vectors.
    """
    pts = np.array([[p.x1, p.x2] for p in trajectory], dtype=float)
    if pts.size == 0:
        return []
    deltas = seam_delta(pts[:-1], pts[1:])
    if deltas.size and np.max(np.abs(deltas)) >= max_step:
        i = int(np.argmax(np.max(np.abs(deltas), axis=1)))
        raise AmbiguousLiftError(
            f"trajectory step {i}->{i + 1} moves {np.abs(deltas[i]).max():.3f} "
            f">= {max_step} in a coordinate; lift is ambiguous"
        )
    lifts = np.empty_like(pts)
    lifts[0] = initial_lift.array()
    if len(pts) > 1:
        lifts[1:] = lifts[0] + np.cumsum(deltas, axis=0)
    return [LiftedPoint(float(a), float(b)) for a, b in lifts]


def lift_array(points: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Array version of continuous_lift for internal vectorized use."""
    points = np.asarray(points, dtype=float)
    deltas = seam_delta(points[:-1], points[1:])
    if deltas.size and np.max(np.abs(deltas)) >= 0.5:
        raise AmbiguousLiftError("step >= 1/2 during array lift")
    out = np.empty_like(points)
    out[0] = start
    if len(points) > 1:
        out[1:] = start + np.cumsum(deltas, axis=0)
    return out


@dataclass
class DiscreteLoop:
    """Closed discretized curve: N cover nodes, period T, integer homology (k,l).

    nodes[i] for i < N are free; the implicit node N equals nodes[0] + (k,l)
    exactly (closure by deck transformation).
    """

    nodes: np.ndarray
    period: float
    homology: HomologyClass = field(default_factory=lambda: HomologyClass.integer(0, 0))

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise InvalidInputError("loop nodes must be an (N,2) array")
        if len(self.nodes) < MIN_LOOP_NODES:
            raise ResolutionError(
                f"loop needs >= {MIN_LOOP_NODES} nodes, got {len(self.nodes)}"
            )
        if self.period <= 0:
            raise InvalidInputError(f"loop period must be positive, got {self.period}")
        if not self.homology.integral:
            raise InvalidInputError("loop homology must be integral")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def closed_nodes(self) -> np.ndarray:
        """Nodes with the deck-translated closure node appended (N+1 rows)."""
        k, l = self.homology.ints()
        return np.vstack([self.nodes, self.nodes[0] + np.array([k, l], float)])

    def displacement(self) -> np.ndarray:
        k, l = self.homology.ints()
        return np.array([k, l], dtype=float)

    def velocities(self) -> np.ndarray:
        """Piecewise velocities on the N segments under the uniform time grid."""
        z = self.closed_nodes()
        return (z[1:] - z[:-1]) / (self.period / self.n_nodes)


def straight_loop(homology: HomologyClass, period: float, n_nodes: int,
                  base: np.ndarray | None = None) -> DiscreteLoop:
    """Uniform straight-line loop in the given class; default base at the origin."""
    k, l = homology.ints()
    base = np.zeros(2) if base is None else np.asarray(base, dtype=float)
    s = np.arange(n_nodes, dtype=float)[:, None] / n_nodes
    nodes = base + s * np.array([k, l], dtype=float)
    return DiscreteLoop(nodes, period, homology)


def resample_loop(loop: DiscreteLoop, m: int) -> DiscreteLoop:
    """Resample to m nodes, linear by arclength; homology and period preserved."""
    if m < MIN_LOOP_NODES:
        raise ResolutionError(f"resample target {m} below minimum {MIN_LOOP_NODES}")
    if m == loop.n_nodes:
        return DiscreteLoop(loop.nodes.copy(), loop.period, loop.homology)
    z = loop.closed_nodes()
    seg = np.linalg.norm(np.diff(z, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total <= 0:
        # fully collapsed loop: replicate the base point
        nodes = np.repeat(z[:1], m, axis=0)
        return DiscreteLoop(nodes, loop.period, loop.homology)
    targets = total * np.arange(m, dtype=float) / m
    nodes = np.empty((m, 2))
    nodes[:, 0] = np.interp(targets, s, z[:, 0])
    nodes[:, 1] = np.interp(targets, s, z[:, 1])
    return DiscreteLoop(nodes, loop.period, loop.homology)
