"""
Ground truth for the solver: the Picard fixed point of G, residuals of the
variational inequality system, and the expansivity-based convergence checks.
"""
import itertools
import logging
import math

import numpy as np

from visolve.operators import (
    VerifierReport,
    expansivity_constant,
    forward_step,
    margin_report,
    sample_pairs,
)
from visolve.solver import G_map, contraction_factor, stages
from visolve.space import as_vector, duality_map, inner, norm, sample_in

logger = logging.getLogger(__name__)

ORACLE_TOL = 1e-10
PICARD_SLACK = 10
TERMINAL_GAP_FACTOR = 10


class ContractionError(RuntimeError):
    pass


def picard_iteration_bound(r, initial_residual, tol):
    """Steps after which r^N * initial_residual <= tol * (1 - r)."""
    target = tol * (1 - r)
    if initial_residual <= target:
        return 0
    if r == 0:
        return 1
    return max(0, math.ceil(math.log(target / initial_residual) / math.log(r)))


def fixed_point_G(spec, tol=ORACLE_TOL, start=None):
    """
    Picard iteration x <- G(x) from Q_C(0) (or Q_C(start)). Stops once
    ||x - G(x)|| <= tol (1 - r), which puts x within tol of the fixed point.
    """
    r = contraction_factor(spec)
    if r >= 1:
        raise ContractionError(f"contraction factor r = {r:.6g} >= 1; G is not a certified contraction")

    origin = np.zeros(spec.dim) if start is None else as_vector(start, "start")
    x = spec.C.project(origin)
    gx = G_map(spec, x)
    residual = norm(x - gx)
    target = tol * (1 - r)
    bound = picard_iteration_bound(r, residual, tol)

    n = 0
    while residual > target:
        if n >= bound + PICARD_SLACK:
            raise ContractionError(
                f"Picard iteration exceeded its a-priori bound of {bound} steps "
                f"(residual {residual:.3e}); the declared constants understate G"
            )
        x = gx
        gx = G_map(spec, x)
        residual = norm(x - gx)
        n += 1
    logger.debug("Picard fixed point after %d steps (bound %d, r = %.4g, residual %.3e)", n, bound, r, residual)
    return x


def stage_triple(spec, p):
    """(x*, y*, z*) induced by a fixed point p of G."""
    z, y, _ = stages(spec, as_vector(p, "p"))
    return as_vector(p, "p"), y, z


def vi_residual(spec, x_star, y_star, z_star):
    """Largest residual of x* = Q_C(y* - l1 A1 y*), y* = Q_C(z* - l2 A2 z*), z* = Q_C(x* - l3 A3 x*)."""
    x_star, y_star, z_star = (as_vector(v) for v in (x_star, y_star, z_star))
    C = spec.C
    return max(
        norm(x_star - C.project(forward_step(spec.A1, spec.lambda1, y_star))),
        norm(y_star - C.project(forward_step(spec.A2, spec.lambda2, z_star))),
        norm(z_star - C.project(forward_step(spec.A3, spec.lambda3, x_star))),
    )


def remark_bound_check(trace, spec, p):
    """
    ||x_n - p|| <= ||A3 x_n - A3 p|| / (d3 - c3 L3^2) at every recorded n, and
    the terminal gap ||A3 x_N - A3 p|| <= 10 (d3 - c3 L3^2) tol.
    """
    p = as_vector(p, "p")
    alpha = expansivity_constant(spec.A3)
    points = np.array([rec.x for rec in trace.iterations])
    gaps = np.linalg.norm(spec.A3.apply_rows(points) - spec.A3(p), axis=1)
    dists = np.linalg.norm(points - p, axis=1)
    margins = gaps / alpha - dists
    terminal = TERMINAL_GAP_FACTOR * alpha * trace.tol - gaps[-1]
    all_margins = np.append(margins, terminal)
    firsts = np.vstack([points, points[-1:]])
    seconds = np.tile(p, (len(all_margins), 1))
    report = margin_report("remark_bound", all_margins, firsts, seconds)
    report.samples = len(points)
    return report


def viscosity_vi_value(q, p, f):
    q = as_vector(q, "q")
    return inner(q - f(q), duality_map(q - as_vector(p, "p")))


def viscosity_vi_check(q, p, f, tol):
    """<q - f(q), J(q - p)> <= tol"""
    return viscosity_vi_value(q, p, f) <= tol


def check_G_contraction(spec, n_samples, seed):
    r = contraction_factor(spec)
    X, Y = sample_pairs(spec.dim, n_samples, seed, spec.C)
    GX = np.array([G_map(spec, x) for x in X])
    GY = np.array([G_map(spec, y) for y in Y])
    margins = r * np.linalg.norm(X - Y, axis=1) - np.linalg.norm(GX - GY, axis=1)
    return margin_report("G.contraction", margins, X, Y)


def singleton_check(spec, n_starts=10, seed=0, tol=ORACLE_TOL):
    """Picard from n_starts random points of C must land within 2 tol of each other."""
    starts = sample_in(spec.C, n_starts, seed)
    points = [fixed_point_G(spec, tol, start=s) for s in starts]
    if len(points) < 2:
        return VerifierReport("oracle.singleton", len(points), 2 * tol, True, tolerance=0.0)
    pairs = list(itertools.combinations(range(len(points)), 2))
    margins = np.array([2 * tol - norm(points[i] - points[j]) for i, j in pairs])
    firsts = np.array([points[i] for i, _ in pairs])
    seconds = np.array([points[j] for _, j in pairs])
    report = margin_report("oracle.singleton", margins, firsts, seconds, tolerance=0.0)
    report.samples = len(points)
    return report
