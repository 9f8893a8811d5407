"""
Three-stage projected viscosity iteration for the general system of
variational inequalities:

    z_n     = Q_C(x_n - lambda3 A3 x_n)
    y_n     = Q_C(z_n - lambda2 A2 z_n)
    t_n     = Q_C(y_n - lambda1 A1 y_n)            (= G(x_n))
    x_{n+1} = a_n f(x_n) + b_n x_n + (1 - a_n - b_n) S(t_n)
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from visolve.operators import (
    check_cocoercive,
    check_declared_constants,
    check_lipschitz,
    check_map_lipschitz,
    check_maps_into,
    forward_step,
    nonexpansive_factor,
    step_window,
)
from visolve.space import DimensionMismatch, as_vector, distance, norm

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 1_000_000
FEASIBILITY_TOL = 1e-10
VALIDATION_SAMPLES = 256


class ScheduleError(ValueError):
    pass


class ValidationError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class ScheduleSpec:
    family = "schedule"

    def at(self, n):
        raise NotImplementedError

    def supremum(self):
        return max(self.at(1), self.at(2))

    def c1_violation(self):
        return None

    def c2_violation(self):
        return None


def _unit_interval(value, label):
    value = float(value)
    if not 0 < value < 1:
        raise ScheduleError(f"{label} must lie in (0, 1), got {value}")
    return value


def _positive_int(value, label):
    if int(value) != value or value < 1:
        raise ScheduleError(f"{label} must be a positive integer, got {value}")
    return int(value)


@dataclass(frozen=True)
class Harmonic(ScheduleSpec):
    """a_n = 1 / (n + shift)"""

    shift: int = 1
    family = "harmonic"

    def __post_init__(self):
        object.__setattr__(self, "shift", _positive_int(self.shift, "harmonic shift"))

    def at(self, n):
        return 1.0 / (n + self.shift)

    def supremum(self):
        return self.at(1)

    def c2_violation(self):
        return "(C2) needs liminf b_n > 0 but a harmonic schedule tends to 0"


@dataclass(frozen=True)
class Constant(ScheduleSpec):
    value: float = 0.5
    family = "constant"

    def __post_init__(self):
        object.__setattr__(self, "value", _unit_interval(self.value, "constant schedule value"))

    def at(self, n):
        return self.value

    def supremum(self):
        return self.value

    def c1_violation(self):
        return f"(C1) needs a_n -> 0 but a constant schedule stays at {self.value:g}"


@dataclass(frozen=True)
class PowerLaw(ScheduleSpec):
    """a_n = (n + shift) ** -exponent; shift >= 1 keeps a_1 below 1."""

    exponent: float = 1.0
    shift: int = 1
    family = "power_law"

    def __post_init__(self):
        exponent = float(self.exponent)
        if not 0 < exponent <= 1:
            raise ScheduleError(f"power-law exponent must lie in (0, 1], got {exponent}")
        object.__setattr__(self, "exponent", exponent)
        object.__setattr__(self, "shift", _positive_int(self.shift, "power-law shift"))

    def at(self, n):
        return float((n + self.shift) ** -self.exponent)

    def supremum(self):
        return self.at(1)

    def c2_violation(self):
        return "(C2) needs liminf b_n > 0 but a power-law schedule tends to 0"


@dataclass(frozen=True)
class Oscillating(ScheduleSpec):
    """b_n = low for odd n, high for even n."""

    low: float = 0.25
    high: float = 0.5
    family = "oscillating"

    def __post_init__(self):
        low = _unit_interval(self.low, "oscillating low")
        high = _unit_interval(self.high, "oscillating high")
        if low > high:
            raise ScheduleError(f"oscillating low {low} exceeds high {high}")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    def at(self, n):
        return self.low if n % 2 else self.high

    def c1_violation(self):
        return f"(C1) needs a_n -> 0 but an oscillating schedule keeps returning to {self.high:g}"


def schedule_value(schedule, n):
    if int(n) != n or n < 1:
        raise ValueError(f"schedule index must be a positive integer, got {n}")
    return schedule.at(int(n))


def max_weight_sum(schedule_a, schedule_b):
    # every a-family is nonincreasing and every b-family has period <= 2,
    # so sup_n (a_n + b_n) is attained at n = 1 or n = 2
    return max(schedule_a.at(n) + schedule_b.at(n) for n in (1, 2))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    C: object
    A1: object
    A2: object
    A3: object
    lambda1: float
    lambda2: float
    lambda3: float
    f: object
    S: object
    schedule_a: ScheduleSpec
    schedule_b: ScheduleSpec
    space: object

    @property
    def dim(self):
        return self.space.dim

    @property
    def operators(self):
        return (self.A1, self.A2, self.A3)

    @property
    def lambdas(self):
        return (self.lambda1, self.lambda2, self.lambda3)


@dataclass(frozen=True)
class Violation:
    hypothesis: str
    message: str

    def __str__(self):
        return f"{self.hypothesis}: {self.message}"


@dataclass
class ValidationResult:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok


def _dimension_violations(spec):
    out = []
    if spec.C.dim != spec.dim:
        out.append(Violation("dimension", f"C has dimension {spec.C.dim}, space has {spec.dim}"))
    for i, A in enumerate(spec.operators, start=1):
        if A.dim != spec.dim:
            out.append(Violation("dimension", f"A{i} has dimension {A.dim}, space has {spec.dim}"))
    return out


def step_violations(spec):
    """Step-size window checks 0 < lambda_i < (d_i - c_i L_i^2) / (K^2 L_i^2)."""
    out = []
    for i, (A, lam) in enumerate(zip(spec.operators, spec.lambdas), start=1):
        window = step_window(A, spec.space.K)
        if not lam > 0:
            out.append(Violation(f"step-size window (A{i})", f"lambda{i} = {lam:g} must be positive"))
        elif lam >= window:
            out.append(Violation(
                f"step-size window (A{i})",
                f"step size lambda{i} = {lam:g} exceeds window ({window:.4g})",
            ))
    return out


def validate(spec, n_samples=VALIDATION_SAMPLES, seed=0):
    violations = _dimension_violations(spec)
    violations += step_violations(spec)

    c1 = spec.schedule_a.c1_violation()
    if c1:
        violations.append(Violation("(C1)", c1))
    c2 = spec.schedule_b.c2_violation()
    if c2:
        violations.append(Violation("(C2)", c2))
    weight = max_weight_sum(spec.schedule_a, spec.schedule_b)
    if weight >= 1:
        violations.append(Violation("weights", f"a_n + b_n reaches {weight:.6g}; must stay below 1"))

    if any(v.hypothesis == "dimension" for v in violations):
        return ValidationResult(violations)

    for i, A in enumerate(spec.operators, start=1):
        if A.kind == "affine":
            report = check_declared_constants(A)
            if not report.passed:
                violations.append(Violation(f"declared constants (A{i})", report.detail))
            continue
        for check in (check_cocoercive, check_lipschitz):
            report = check(A, n_samples, seed, spec.C)
            if not report.passed:
                violations.append(Violation(
                    f"declared constants (A{i})",
                    f"{report.name} fails on samples (worst margin {report.worst_margin:.3e})",
                ))

    sampled = (
        ("contraction f", check_map_lipschitz(spec.f, spec.f.alpha, spec.dim, n_samples, seed, spec.C, "f.contraction")),
        ("f maps C into C", check_maps_into(spec.f, spec.C, n_samples, seed, "f.maps_into_C")),
        ("S nonexpansive", check_map_lipschitz(spec.S, 1.0, spec.dim, n_samples, seed, spec.C, "S.nonexpansive")),
        ("S maps C into C", check_maps_into(spec.S, spec.C, n_samples, seed, "S.maps_into_C")),
    )
    for hypothesis, report in sampled:
        if not report.passed:
            violations.append(Violation(hypothesis, f"fails on samples (worst margin {report.worst_margin:.3e})"))
    return ValidationResult(violations)


def require_valid(spec, n_samples=VALIDATION_SAMPLES, seed=0):
    result = validate(spec, n_samples, seed)
    if not result.ok:
        raise ValidationError(result.violations)


def stages(spec, x):
    """(z, y, t) for a point x; t = G(x)."""
    C = spec.C
    z = C.project(forward_step(spec.A3, spec.lambda3, x))
    y = C.project(forward_step(spec.A2, spec.lambda2, z))
    t = C.project(forward_step(spec.A1, spec.lambda1, y))
    return z, y, t


def _point(spec, x):
    x = as_vector(x)
    if x.shape[0] != spec.dim:
        raise DimensionMismatch(f"point has dimension {x.shape[0]}, problem has {spec.dim}")
    return x


def G_map(spec, x):
    return stages(spec, _point(spec, x))[2]


def contraction_factor(spec):
    """Lipschitz bound of G: product of the forward-step factors (Q_C is nonexpansive)."""
    return math.prod(nonexpansive_factor(A, lam, spec.space.K) for A, lam in zip(spec.operators, spec.lambdas))


@dataclass
class IterationStep:
    x_next: np.ndarray
    z: np.ndarray
    y: np.ndarray
    t: np.ndarray
    a: float
    b: float


def viscosity_step(spec, x, a, b):
    if a < 0 or b < 0:
        raise ScheduleError(f"schedule weights must be nonnegative, got a={a}, b={b}")
    if a + b >= 1:
        raise ScheduleError(f"a_n + b_n = {a + b:.17g} leaves no weight for S")
    x = _point(spec, x)
    z, y, t = stages(spec, x)
    x_next = a * spec.f(x) + b * x + (1 - a - b) * spec.S(t)
    return IterationStep(x_next, z, y, t, a, b)


def iterate_once(spec, x_n, n):
    a = schedule_value(spec.schedule_a, n)
    b = schedule_value(spec.schedule_b, n)
    return viscosity_step(spec, x_n, a, b)


@dataclass
class TraceRecord:
    n: int
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    t: np.ndarray
    a: float
    b: float
    step_norm: float
    residual: float
    dist_to_p: Optional[float] = None
    A3_gap: Optional[float] = None


@dataclass
class Trace:
    iterations: List[TraceRecord]
    terminated_by: str
    final: np.ndarray
    tol: float

    def __len__(self):
        return len(self.iterations)


def solve(spec, x1, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, reference_p=None, check=True):
    """
    Run the viscosity iteration from x1 until
        ||x_{n+1} - x_n|| <= tol * max(1, ||x_n||)  and  ||x_n - G(x_n)|| <= tol
    or max_iter steps. Hitting max_iter is reported in the trace, not raised.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, got {max_iter}")
    if check:
        require_valid(spec)

    x = _point(spec, x1)
    gap = distance(spec.C, x)
    if gap > FEASIBILITY_TOL:
        logger.warning("x1 lies %.3g outside C; projecting it onto C", gap)
        x = spec.C.project(x)

    p = A3p = None
    if reference_p is not None:
        p = _point(spec, reference_p)
        A3p = spec.A3(p)

    records = []
    terminated_by = "max_iter"
    for n in range(1, max_iter + 1):
        step = iterate_once(spec, x, n)
        step_norm = norm(step.x_next - x)
        residual = norm(x - step.t)
        record = TraceRecord(n, x, step.z, step.y, step.t, step.a, step.b, step_norm, residual)
        if p is not None:
            record.dist_to_p = norm(x - p)
            record.A3_gap = norm(spec.A3(x) - A3p)
        records.append(record)
        converged = step_norm <= tol * max(1.0, norm(x)) and residual <= tol
        x = step.x_next
        if converged:
            terminated_by = "tolerance"
            break

    if terminated_by == "max_iter":
        logger.info("stopped at max_iter = %d (last step %.3e)", max_iter, records[-1].step_norm)
    else:
        logger.info("converged in %d iterations (residual %.3e)", len(records), records[-1].residual)
    return Trace(records, terminated_by, x, tol)
