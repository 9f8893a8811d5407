"""
Finite-dimensional real Hilbert space primitives.

Vectors are 1-D float64 numpy arrays. The duality map is the identity and the
sunny nonexpansive retraction Q_C is the metric projection onto C.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

# 2-uniformly smooth constant of a Hilbert space: K^2 = 1/2 turns the
# smoothness inequality into ||x + y||^2 = ||x||^2 + 2<y, x> + ||y||^2.
HILBERT_K = 1.0 / math.sqrt(2.0)

ABS_TOL = 1e-12
INTERSECTION_TOL = 1e-12
INTERSECTION_MAX_CYCLES = 100_000
SAMPLE_HALF_WIDTH = 10.0


class DimensionMismatch(ValueError):
    pass


class InvalidSetError(ValueError):
    pass


class InfeasibleSetError(RuntimeError):
    pass


def as_vector(x, name="x"):
    """Return x as a read-only finite float64 vector."""
    v = np.array(x, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValueError(f"{name} must have positive dimension")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries: {v}")
    v.flags.writeable = False
    return v


def _check_dims(x, y):
    if x.shape != y.shape:
        raise DimensionMismatch(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")


def inner(x, y):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    _check_dims(x, y)
    return float(np.dot(x, y))


def norm(x):
    return float(np.linalg.norm(np.asarray(x, dtype=np.float64)))


def duality_map(x):
    """Normalized duality map J. In Hilbert space J(x) = x."""
    return as_vector(x).copy()


@dataclass(frozen=True, eq=False)
class SpaceParams:
    dim: int
    K: float = field(default=HILBERT_K, init=False)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")


class ConvexSet:
    """Nonempty closed convex set with an exact (or convergent) metric projection."""

    dim: int

    def project(self, x):
        raise NotImplementedError

    def __and__(self, other):
        return Intersection((self, other))


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = as_vector(self.lower, "lower")
        upper = as_vector(self.upper, "upper")
        if lower.shape != upper.shape:
            raise InvalidSetError("box bounds have different dimensions")
        if np.any(lower > upper):
            raise InvalidSetError(f"box lower bound exceeds upper bound: {lower} > {upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self):
        return self.lower.shape[0]

    def project(self, x):
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center, "center"))
        radius = float(self.radius)
        if not math.isfinite(radius) or radius <= 0:
            raise InvalidSetError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", radius)

    @property
    def dim(self):
        return self.center.shape[0]

    def project(self, x):
        offset = x - self.center
        dist = np.linalg.norm(offset)
        if dist <= self.radius:
            return np.array(x, dtype=np.float64)
        return self.center + offset * (self.radius / dist)


@dataclass(frozen=True, eq=False)
class Halfspace(ConvexSet):
    """{x : <normal, x> <= offset}"""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = as_vector(self.normal, "normal")
        if not np.any(normal):
            raise InvalidSetError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self):
        return self.normal.shape[0]

    def project(self, x):
        excess = float(np.dot(self.normal, x)) - self.offset
        if excess <= 0:
            return np.array(x, dtype=np.float64)
        return x - (excess / float(np.dot(self.normal, self.normal))) * self.normal


@dataclass(frozen=True, eq=False)
class Intersection(ConvexSet):
    """Intersection of convex sets, projected onto with Dykstra's cyclic scheme."""

    sets: tuple
    tol: float = INTERSECTION_TOL
    max_cycles: int = INTERSECTION_MAX_CYCLES

    def __post_init__(self):
        flat = []
        for s in self.sets:
            if isinstance(s, Intersection):
                flat.extend(s.sets)
            elif isinstance(s, ConvexSet):
                flat.append(s)
            else:
                raise InvalidSetError(f"not a convex set: {s!r}")
        if not flat:
            raise InvalidSetError("intersection of no sets")
        if len({s.dim for s in flat}) != 1:
            raise InvalidSetError("intersection members have different dimensions")
        object.__setattr__(self, "sets", tuple(flat))
        # probe for emptiness now rather than in the middle of a solve
        self.project(np.zeros(self.dim))

    @property
    def dim(self):
        return self.sets[0].dim

    def project(self, x):
        x = np.array(x, dtype=np.float64)
        corrections = [np.zeros_like(x) for _ in self.sets]
        for _ in range(self.max_cycles):
            change = 0.0
            x_start = x
            for i, s in enumerate(self.sets):
                shifted = x + corrections[i]
                x_new = s.project(shifted)
                new_correction = shifted - x_new
                change += float(np.linalg.norm(new_correction - corrections[i]))
                corrections[i] = new_correction
                x = x_new
            change += float(np.linalg.norm(x - x_start))
            scale = max(1.0, float(np.linalg.norm(x)))
            if change <= self.tol * scale:
                violation = max(float(np.linalg.norm(x - s.project(x))) for s in self.sets)
                if violation <= self.tol * scale:
                    return x
        raise InfeasibleSetError(
            f"cyclic projection did not converge in {self.max_cycles} cycles; "
            "the intersection is probably empty"
        )


def _check_set_dim(convex_set, x):
    if convex_set.dim != x.shape[0]:
        raise DimensionMismatch(f"set has dimension {convex_set.dim}, point has {x.shape[0]}")


def project(convex_set, x):
    x = as_vector(x)
    _check_set_dim(convex_set, x)
    return convex_set.project(x)


def distance(convex_set, x):
    x = as_vector(x)
    return norm(x - project(convex_set, x))


def contains(convex_set, x, tol=ABS_TOL):
    return distance(convex_set, x) <= tol


def sample_box(dim, n, rng, half_width=SAMPLE_HALF_WIDTH):
    return rng.uniform(-half_width, half_width, size=(n, dim))


def sample_in(convex_set, n, seed):
    """n points of the set: uniform box samples of half-width 10 projected onto it."""
    rng = np.random.default_rng(seed)
    points = sample_box(convex_set.dim, n, rng)
    return np.array([convex_set.project(p) for p in points])
