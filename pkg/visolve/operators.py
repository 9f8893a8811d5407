"""
Certified operators: relaxed (c, d)-cocoercive, L-Lipschitz maps whose
constants can be re-checked by sampling, plus the contraction f and the
nonexpansive map S of the viscosity iteration.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from visolve.space import HILBERT_K, as_vector, sample_box, sample_in

logger = logging.getLogger(__name__)

VERIFY_TOL = 1e-10
DECLARATION_RTOL = 1e-12


class CertificationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CertifiedOperator:
    """
    A: R^dim -> R^dim with constants (c, d, L) such that
        <Ax - Ay, x - y> >= -c ||Ax - Ay||^2 + d ||x - y||^2
        ||Ax - Ay|| <= L ||x - y||
    Affine operators carry (matrix, offset); custom ones carry fn.
    """

    dim: int
    c: float
    d: float
    L: float
    matrix: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None
    fn: Optional[Callable] = None
    name: str = "A"

    def __post_init__(self):
        for label in ("c", "d", "L"):
            value = float(getattr(self, label))
            if not math.isfinite(value) or value <= 0:
                raise CertificationError(f"{self.name}: constant {label} must be positive, got {value}")
            object.__setattr__(self, label, value)
        if self.d <= self.c * self.L ** 2:
            raise CertificationError(
                f"{self.name}: d = {self.d:g} <= c L^2 = {self.c * self.L ** 2:g}; "
                "no step size satisfies the nonexpansivity window"
            )
        if (self.matrix is None) == (self.fn is None):
            raise CertificationError(f"{self.name}: give exactly one of matrix or fn")
        if self.matrix is not None:
            matrix = np.array(self.matrix, dtype=np.float64)
            if matrix.shape != (self.dim, self.dim):
                raise CertificationError(f"{self.name}: matrix must be {self.dim}x{self.dim}, got {matrix.shape}")
            matrix.flags.writeable = False
            offset = np.zeros(self.dim) if self.offset is None else self.offset
            object.__setattr__(self, "matrix", matrix)
            object.__setattr__(self, "offset", as_vector(offset, f"{self.name} offset"))
            if self.offset.shape[0] != self.dim:
                raise CertificationError(f"{self.name}: offset has dimension {self.offset.shape[0]}, expected {self.dim}")

    @classmethod
    def custom(cls, fn, dim, c, d, L, name="A"):
        return cls(dim=dim, c=c, d=d, L=L, fn=fn, name=name)

    @property
    def kind(self):
        return "affine" if self.matrix is not None else "custom"

    def __call__(self, x):
        if self.matrix is not None:
            return self.matrix @ x + self.offset
        return np.asarray(self.fn(x), dtype=np.float64)

    def apply_rows(self, points):
        if self.matrix is not None:
            return points @ self.matrix.T + self.offset
        return np.array([self(p) for p in points])


def affine_certificate(M, c):
    """
    Tight (d, L) for A(x) = Mx + q:
        L = ||M||_2,  d = lambda_min(sym(M) + c M^T M)
    since <Mw, w> + c||Mw||^2 = w^T (sym(M) + c M^T M) w.
    """
    M = np.asarray(M, dtype=np.float64)
    L = float(np.linalg.norm(M, 2))
    d = float(np.linalg.eigvalsh(0.5 * (M + M.T) + c * (M.T @ M)).min())
    return d, L


def certify_affine(M, q, c, d=None, L=None, name="A"):
    """
    Certify A(x) = Mx + q with the constants of affine_certificate.
    Declared d/L replace them; declarations looser than the certificate are
    kept with a warning. validate rejects them and verify reports them.
    """
    M = np.array(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise CertificationError(f"{name}: matrix must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise CertificationError(f"{name}: matrix has non-finite entries")
    c = float(c)
    if not c > 0:
        raise CertificationError(f"{name}: c must be positive, got {c}")

    d_cert, L_cert = affine_certificate(M, c)
    if d_cert <= 0:
        raise CertificationError(
            f"{name}: matrix is not relaxed cocoercive for c = {c:g} (d = {d_cert:.6g} <= 0)"
        )
    if d_cert <= c * L_cert ** 2:
        raise CertificationError(
            f"{name}: window violation, d = {d_cert:.6g} <= c L^2 = {c * L_cert ** 2:.6g}"
        )

    d_used = d_cert if d is None else float(d)
    L_used = L_cert if L is None else float(L)
    if d_used > d_cert * (1 + DECLARATION_RTOL):
        logger.warning("%s: declared d = %g exceeds certified d = %g", name, d_used, d_cert)
    if L_used < L_cert * (1 - DECLARATION_RTOL):
        logger.warning("%s: declared L = %g is below the spectral norm %g", name, L_used, L_cert)
    logger.debug("%s certified: c=%g d=%g L=%g", name, c, d_used, L_used)
    return CertifiedOperator(dim=M.shape[0], c=c, d=d_used, L=L_used, matrix=M, offset=q, name=name)


def expansivity_constant(A):
    """||Ax - Ay|| >= (d - cL^2) ||x - y||."""
    return A.d - A.c * A.L ** 2


def step_window(A, K=HILBERT_K):
    """Upper bound on lambda for which I - lambda A is nonexpansive."""
    return expansivity_constant(A) / (K ** 2 * A.L ** 2)


def forward_step(A, lam, x):
    if lam < 0:
        raise ValueError(f"step size must be nonnegative, got {lam}")
    return x - lam * A(x)


def nonexpansive_factor(A, lam, K=HILBERT_K):
    """Lipschitz factor of I - lam A; below 1 strictly inside the step window."""
    squared = 1 + 2 * (lam * A.c * A.L ** 2 - lam * A.d + K ** 2 * lam ** 2 * A.L ** 2)
    return math.sqrt(max(0.0, squared))


@dataclass(frozen=True, eq=False)
class ContractionMap:
    fn: Callable
    alpha: float
    description: str = "custom"

    def __post_init__(self):
        alpha = float(self.alpha)
        if not 0 < alpha < 1:
            raise ValueError(f"contraction constant must lie in (0, 1), got {alpha}")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def scaled(cls, alpha, center):
        """f(x) = center + alpha (x - center)"""
        center = as_vector(center, "center")
        return cls(lambda x: center + alpha * (x - center), alpha, f"scaled toward {center.tolist()}")

    @classmethod
    def constant(cls, value, alpha=0.5):
        value = as_vector(value, "value")
        return cls(lambda x: value.copy(), alpha, f"constant {value.tolist()}")

    def __call__(self, x):
        return np.asarray(self.fn(x), dtype=np.float64)


class NonexpansiveMap:
    def __call__(self, x):
        raise NotImplementedError


class Identity(NonexpansiveMap):
    def __call__(self, x):
        return np.array(x, dtype=np.float64)

    def __repr__(self):
        return "Identity()"


@dataclass(frozen=True, eq=False)
class FixedPointRotation(NonexpansiveMap):
    """Rotation by angle in the coordinate plane (i, j) about center."""

    center: np.ndarray
    plane: tuple
    angle: float

    def __post_init__(self):
        center = as_vector(self.center, "center")
        i, j = (int(k) for k in self.plane)
        if i == j or not (0 <= i < center.shape[0] and 0 <= j < center.shape[0]):
            raise ValueError(f"invalid rotation plane {self.plane} for dimension {center.shape[0]}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "plane", (i, j))
        object.__setattr__(self, "angle", float(self.angle))

    def __call__(self, x):
        i, j = self.plane
        shifted = np.array(x, dtype=np.float64) - self.center
        cos, sin = math.cos(self.angle), math.sin(self.angle)
        xi, xj = shifted[i], shifted[j]
        shifted[i] = cos * xi - sin * xj
        shifted[j] = sin * xi + cos * xj
        return self.center + shifted


@dataclass(frozen=True, eq=False)
class ProjectionOnto(NonexpansiveMap):
    convex_set: object

    def __call__(self, x):
        return self.convex_set.project(np.asarray(x, dtype=np.float64))


@dataclass
class VerifierReport:
    name: str
    samples: int
    worst_margin: float
    passed: bool
    witness: Optional[tuple] = None
    tolerance: float = VERIFY_TOL
    detail: str = ""

    def to_dict(self):
        worst = self.worst_margin if math.isfinite(self.worst_margin) else None
        out = {"passed": self.passed, "worst_margin": worst, "samples": self.samples}
        if self.witness is not None:
            out["witness"] = [list(w) for w in self.witness]
        if self.detail:
            out["detail"] = self.detail
        return out


def failed_report(name, reason):
    return VerifierReport(name=name, samples=0, worst_margin=-math.inf, passed=False, detail=reason)


def check_declared_constants(A):
    """Affine A only: declared d at most the certified d, declared L at least ||M||_2."""
    d_cert, L_cert = affine_certificate(A.matrix, A.c)
    margin = min(
        d_cert + DECLARATION_RTOL * abs(d_cert) - A.d,
        A.L - L_cert * (1 - DECLARATION_RTOL),
    )
    passed = margin >= 0
    detail = "" if passed else (
        f"declared d = {A.d:g}, L = {A.L:g} but the matrix certifies d = {d_cert:g}, L = {L_cert:g}"
    )
    return VerifierReport(f"{A.name}.declared_constants", 1, margin, passed, tolerance=0.0, detail=detail)


def margin_report(name, margins, first, second, tolerance=VERIFY_TOL):
    """passed iff min(margins) >= -tolerance; the worst pair is the witness on failure."""
    worst = int(np.argmin(margins))
    worst_margin = float(margins[worst])
    passed = worst_margin >= -tolerance
    witness = None if passed else (first[worst].tolist(), second[worst].tolist())
    if not passed:
        logger.debug("%s failed: worst margin %.3e", name, worst_margin)
    return VerifierReport(name, len(margins), worst_margin, passed, witness, tolerance)


def sample_pairs(dim, n_samples, seed, domain=None):
    if n_samples < 1:
        raise ValueError(f"n_samples must be at least 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    first = sample_box(dim, n_samples, rng)
    second = sample_box(dim, n_samples, rng)
    if domain is not None:
        first = np.array([domain.project(p) for p in first])
        second = np.array([domain.project(p) for p in second])
    return first, second


def _differences(A, n_samples, seed, domain):
    X, Y = sample_pairs(A.dim, n_samples, seed, domain)
    return X, Y, A.apply_rows(X) - A.apply_rows(Y), X - Y


def _rownorm(rows):
    return np.linalg.norm(rows, axis=1)


def check_cocoercive(A, n_samples, seed, domain=None):
    X, Y, D, W = _differences(A, n_samples, seed, domain)
    w_sq = np.sum(W * W, axis=1)
    margins = np.sum(D * W, axis=1) + A.c * np.sum(D * D, axis=1) - A.d * w_sq
    return margin_report(f"{A.name}.cocoercive", margins / (1 + w_sq), X, Y)


def check_expansive(A, n_samples, seed, domain=None):
    X, Y, D, W = _differences(A, n_samples, seed, domain)
    margins = _rownorm(D) - expansivity_constant(A) * _rownorm(W)
    return margin_report(f"{A.name}.expansive", margins, X, Y)


def check_lipschitz(A, n_samples, seed, domain=None):
    X, Y, D, W = _differences(A, n_samples, seed, domain)
    margins = A.L * _rownorm(W) - _rownorm(D)
    return margin_report(f"{A.name}.lipschitz", margins, X, Y)


def check_forward_step(A, lam, K, n_samples, seed, domain=None):
    X, Y, D, W = _differences(A, n_samples, seed, domain)
    factor = nonexpansive_factor(A, lam, K)
    margins = factor * _rownorm(W) - _rownorm(W - lam * D)
    return margin_report(f"{A.name}.forward_step", margins, X, Y)


def check_monotone_gap(A, n_samples, seed, domain=None):
    """<Ax - Ay, x - y> >= (d - cL^2) ||x - y||^2 >= 0"""
    X, Y, D, W = _differences(A, n_samples, seed, domain)
    w_sq = np.sum(W * W, axis=1)
    alpha = expansivity_constant(A)
    margins = np.minimum(np.sum(D * W, axis=1) - alpha * w_sq, alpha * w_sq)
    return margin_report(f"{A.name}.monotone_gap", margins / (1 + w_sq), X, Y)


def check_map_lipschitz(fn, constant, dim, n_samples, seed, domain=None, name="map"):
    X, Y = sample_pairs(dim, n_samples, seed, domain)
    images = np.array([fn(x) - fn(y) for x, y in zip(X, Y)])
    margins = constant * _rownorm(X - Y) - _rownorm(images)
    return margin_report(name, margins, X, Y)


def check_maps_into(fn, convex_set, n_samples, seed, name="map"):
    points = sample_in(convex_set, n_samples, seed)
    images = np.array([fn(p) for p in points])
    projected = np.array([convex_set.project(v) for v in images])
    margins = -_rownorm(images - projected)
    return margin_report(name, margins, points, images)
