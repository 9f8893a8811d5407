from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from visolve.config import load_config
from visolve.operators import ContractionMap, FixedPointRotation, Identity, certify_affine
from visolve.solver import Constant, Harmonic, ProblemSpec
from visolve.space import Ball, Box, SpaceParams

FIXTURES = Path(__file__).parent / "fixtures"

CONVERGENCE_FIXTURES = sorted(p.name for p in FIXTURES.glob("*.json"))

X0 = np.array([0.5, -0.25])


def fixture_path(name):
    return FIXTURES / name


def scalar_problem(C=None, lam=0.5, f=None, S=None, schedule_a=None, schedule_b=None):
    """The one-dimensional problem on [-1, 1] with A = x, c = 0.1, d = 1."""
    A = [certify_affine([[1.0]], [0.0], c=0.1, d=1.0, name=f"A{i}") for i in (1, 2, 3)]
    lams = lam if isinstance(lam, (tuple, list)) else (lam, lam, lam)
    return ProblemSpec(
        C=C or Box([-1.0], [1.0]),
        A1=A[0],
        A2=A[1],
        A3=A[2],
        lambda1=lams[0],
        lambda2=lams[1],
        lambda3=lams[2],
        f=f or ContractionMap.scaled(0.5, [0.0]),
        S=S or Identity(),
        schedule_a=schedule_a or Harmonic(shift=2),
        schedule_b=schedule_b or Constant(1 / 3),
        space=SpaceParams(1),
    )


@st.composite
def certified_matrices(draw, max_dim=4):
    """M = a I + B with ||B||_2 <= a / 10, certified with c = 0.1 / a."""
    dim = draw(st.integers(min_value=1, max_value=max_dim))
    a = draw(st.floats(min_value=0.5, max_value=5.0))
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    B = np.random.default_rng(seed).standard_normal((dim, dim))
    B *= (a / 10) / max(np.linalg.norm(B, 2), 1e-12)
    return a * np.eye(dim) + B, 0.1 / a


@pytest.fixture
def scalar_spec():
    return scalar_problem()


@pytest.fixture
def load_fixture():
    def load(name):
        return load_config(fixture_path(name))
    return load


def rotation_problem():
    """Two-dimensional problem whose operators all vanish at X0, the centre of C and of S."""
    A1 = certify_affine([[2.0, 1.0], [-1.0, 2.0]], [-0.75, 1.0], c=0.05, name="A1")
    A2 = certify_affine(2 * np.eye(2), [-1.0, 0.5], c=0.05, name="A2")
    A3 = certify_affine(np.diag([2.0, 3.0]), [-1.0, 0.75], c=0.05, name="A3")
    return ProblemSpec(
        C=Ball(X0, 2.0),
        A1=A1,
        A2=A2,
        A3=A3,
        lambda1=0.4,
        lambda2=0.4,
        lambda3=0.2,
        f=ContractionMap.scaled(0.5, X0),
        S=FixedPointRotation(X0, (0, 1), 0.7),
        schedule_a=Harmonic(shift=2),
        schedule_b=Constant(1 / 3),
        space=SpaceParams(2),
    )


def random_certified_operator(seed):
    """Certified affine operator of dimension 1 + seed % 5, reproducible from seed."""
    rng = np.random.default_rng(seed)
    dim = 1 + seed % 5
    a = rng.uniform(0.5, 5.0)
    B = rng.standard_normal((dim, dim))
    B *= (a / 10) / max(np.linalg.norm(B, 2), 1e-12)
    return certify_affine(a * np.eye(dim) + B, rng.standard_normal(dim), c=0.1 / a, name=f"R{seed}")
