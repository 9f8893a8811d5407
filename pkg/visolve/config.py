"""
RunConfig: JSON problem configurations for the CLI.

Scalars are JSON numbers or decimal strings ("0.05", "1/3", "1e-8"); strings
are parsed exactly and rounded once to float64.
"""
import copy
import json
import logging
import math
import os
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from visolve.operators import (
    CertificationError,
    ContractionMap,
    FixedPointRotation,
    Identity,
    ProjectionOnto,
    certify_affine,
)
from visolve.oracle import ContractionError, fixed_point_G
from visolve.solver import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    Constant,
    Harmonic,
    Oscillating,
    PowerLaw,
    ProblemSpec,
    ScheduleError,
    ValidationError,
    step_violations,
)
from visolve.space import (
    Ball,
    Box,
    Halfspace,
    InfeasibleSetError,
    Intersection,
    InvalidSetError,
    SpaceParams,
)

logger = logging.getLogger(__name__)

MAX_ITER_ENV = "VISOLVE_MAX_ITER"
SWEEP_PARAMETERS = ("lambda1", "lambda2", "lambda3", "tol", "schedule_shift")


class ConfigError(ValueError):
    pass


_PATH_TOKEN = re.compile(r"\[(\d+)\]|([^.\[\]]+)")
_WHITESPACE = re.compile(r"\s*")
_decoder = json.JSONDecoder()


def _skip(text, pos):
    return _WHITESPACE.match(text, pos).end()


def _locate(text, where):
    """
    Offset in the JSON text of the deepest key or list element named by a
    dotted path such as "operators.A3.c" or "set.sets[1].radius".
    """
    found = None
    pos = _skip(text, 0)
    try:
        for index, key in _PATH_TOKEN.findall(where):
            if index:
                if text[pos] != "[":
                    break
                pos = _skip(text, pos + 1)
                for _ in range(int(index)):
                    _, pos = _decoder.raw_decode(text, pos)
                    pos = _skip(text, pos)
                    if text[pos] != ",":
                        return found
                    pos = _skip(text, pos + 1)
                found = pos
                continue
            if text[pos] != "{":
                break
            pos = _skip(text, pos + 1)
            while text[pos] == '"':
                name, end = _decoder.raw_decode(text, pos)
                value = _skip(text, _skip(text, end) + 1)
                if name == key:
                    found = pos
                    pos = value
                    break
                _, pos = _decoder.raw_decode(text, value)
                pos = _skip(text, pos)
                if text[pos] == ",":
                    pos = _skip(text, pos + 1)
            else:
                break
    except (ValueError, IndexError):
        pass
    return found


@dataclass
class RunConfig:
    problem: ProblemSpec
    x1: np.ndarray
    tol: float
    max_iter: int
    seed: int
    output_path: Optional[Path]
    source: str
    raw: dict


class _Reader:
    def __init__(self, source, text=None):
        self.source = source
        self.text = text

    def fail(self, where, message):
        line = self._line_of(where)
        anchor = f"{self.source}:{line}" if line else f"{self.source}"
        raise ConfigError(f"{anchor}: {where}: {message}")

    def _line_of(self, where):
        if not self.text:
            return None
        offset = _locate(self.text, where)
        if offset is None:
            return None
        return self.text.count("\n", 0, offset) + 1

    def get(self, block, key, where, default=KeyError):
        if not isinstance(block, dict):
            self.fail(where, "expected an object")
        if key not in block:
            if default is KeyError:
                self.fail(f"{where}.{key}" if where else key, "missing")
            return default
        return block[key]

    def scalar(self, value, where):
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            self.fail(where, f"expected a number, got {value!r}")
        try:
            result = float(Fraction(value.strip())) if isinstance(value, str) else float(value)
        except (ValueError, ZeroDivisionError):
            self.fail(where, f"cannot parse {value!r} as a number")
        except OverflowError:
            self.fail(where, f"must be finite, got {value!r}")
        if not math.isfinite(result):
            self.fail(where, f"must be finite, got {value!r}")
        return result

    def positive(self, value, where):
        result = self.scalar(value, where)
        if result <= 0:
            self.fail(where, f"must be positive, got {value!r}")
        return result

    def integer(self, value, where):
        result = self.scalar(value, where)
        if result != int(result):
            self.fail(where, f"must be an integer, got {value!r}")
        return int(result)

    def vector(self, value, dim, where):
        if not isinstance(value, list):
            self.fail(where, "expected a list of numbers")
        if len(value) != dim:
            self.fail(where, f"expected {dim} entries, got {len(value)}")
        return np.array([self.scalar(v, f"{where}[{k}]") for k, v in enumerate(value)])

    def matrix(self, value, dim, where):
        if not isinstance(value, list) or len(value) != dim:
            self.fail(where, f"expected {dim} rows")
        return np.array([self.vector(row, dim, f"{where}[{k}]") for k, row in enumerate(value)])


def _parse_set(reader, block, dim, where):
    kind = reader.get(block, "type", where)
    try:
        if kind == "box":
            return Box(
                reader.vector(reader.get(block, "lower", where), dim, f"{where}.lower"),
                reader.vector(reader.get(block, "upper", where), dim, f"{where}.upper"),
            )
        if kind == "ball":
            return Ball(
                reader.vector(reader.get(block, "center", where), dim, f"{where}.center"),
                reader.positive(reader.get(block, "radius", where), f"{where}.radius"),
            )
        if kind == "halfspace":
            return Halfspace(
                reader.vector(reader.get(block, "normal", where), dim, f"{where}.normal"),
                reader.scalar(reader.get(block, "offset", where), f"{where}.offset"),
            )
        if kind == "intersection":
            members = reader.get(block, "sets", where)
            if not isinstance(members, list) or not members:
                reader.fail(f"{where}.sets", "expected a non-empty list of sets")
            return Intersection(tuple(_parse_set(reader, m, dim, f"{where}.sets[{k}]") for k, m in enumerate(members)))
    except (InvalidSetError, InfeasibleSetError) as e:
        reader.fail(where, str(e))
    reader.fail(f"{where}.type", f"unknown set type {kind!r}")


def _parse_operator(reader, block, dim, name):
    where = f"operators.{name}"
    kind = reader.get(block, "kind", where, "affine")
    if kind != "affine":
        reader.fail(f"{where}.kind", f"only affine operators can be configured, got {kind!r}")
    matrix = reader.matrix(reader.get(block, "matrix", where), dim, f"{where}.matrix")
    offset_raw = reader.get(block, "offset", where, None)
    offset = np.zeros(dim) if offset_raw is None else reader.vector(offset_raw, dim, f"{where}.offset")
    c = reader.positive(reader.get(block, "c", where), f"{where}.c")
    d_raw = reader.get(block, "d", where, None)
    L_raw = reader.get(block, "L", where, None)
    d = None if d_raw is None else reader.positive(d_raw, f"{where}.d")
    L = None if L_raw is None else reader.positive(L_raw, f"{where}.L")
    try:
        return certify_affine(matrix, offset, c, d=d, L=L, name=name)
    except CertificationError as e:
        reader.fail(where, str(e))


def _parse_schedule(reader, block, where):
    family = reader.get(block, "family", where)
    try:
        if family == "harmonic":
            return Harmonic(reader.integer(reader.get(block, "shift", where, 1), f"{where}.shift"))
        if family == "constant":
            return Constant(reader.scalar(reader.get(block, "value", where), f"{where}.value"))
        if family == "power_law":
            return PowerLaw(
                reader.scalar(reader.get(block, "exponent", where), f"{where}.exponent"),
                reader.integer(reader.get(block, "shift", where, 1), f"{where}.shift"),
            )
        if family == "oscillating":
            return Oscillating(
                reader.scalar(reader.get(block, "low", where), f"{where}.low"),
                reader.scalar(reader.get(block, "high", where), f"{where}.high"),
            )
    except ScheduleError as e:
        reader.fail(where, str(e))
    reader.fail(f"{where}.family", f"unknown schedule family {family!r}")


def _center(reader, block, dim, where, oracle_point):
    center = reader.get(block, "center", where)
    if center == "oracle":
        return oracle_point()
    return reader.vector(center, dim, f"{where}.center")


def _parse_contraction(reader, block, dim, oracle_point):
    kind = reader.get(block, "kind", "f")
    try:
        if kind == "scaled":
            alpha = reader.scalar(reader.get(block, "alpha", "f"), "f.alpha")
            return ContractionMap.scaled(alpha, _center(reader, block, dim, "f", oracle_point))
        if kind == "constant":
            alpha = reader.scalar(reader.get(block, "alpha", "f", 0.5), "f.alpha")
            return ContractionMap.constant(reader.vector(reader.get(block, "value", "f"), dim, "f.value"), alpha)
    except ValueError as e:
        if isinstance(e, (ConfigError, ValidationError)):
            raise
        reader.fail("f", str(e))
    reader.fail("f.kind", f"unknown contraction kind {kind!r}")


def _parse_nonexpansive(reader, block, dim, oracle_point):
    kind = reader.get(block, "kind", "S")
    if kind == "identity":
        return Identity()
    if kind == "projection":
        return ProjectionOnto(_parse_set(reader, reader.get(block, "set", "S"), dim, "S.set"))
    if kind == "rotation":
        plane = reader.get(block, "plane", "S")
        if not isinstance(plane, list) or len(plane) != 2:
            reader.fail("S.plane", "expected two coordinate indices")
        try:
            return FixedPointRotation(
                _center(reader, block, dim, "S", oracle_point),
                tuple(reader.integer(k, "S.plane") for k in plane),
                reader.scalar(reader.get(block, "angle", "S"), "S.angle"),
            )
        except ValueError as e:
            if isinstance(e, (ConfigError, ValidationError)):
                raise
            reader.fail("S", str(e))
    reader.fail("S.kind", f"unknown nonexpansive map kind {kind!r}")


def build_problem(raw, source="<config>", text=None):
    """ProblemSpec from a parsed config document; "oracle" centers resolve to the fixed point of G."""
    reader = _Reader(source, text)
    dim = reader.integer(reader.get(raw, "dimension", ""), "dimension")
    if dim < 1:
        reader.fail("dimension", "must be positive")
    space = SpaceParams(dim)
    C = _parse_set(reader, reader.get(raw, "set", ""), dim, "set")
    operators = reader.get(raw, "operators", "")
    A1, A2, A3 = (_parse_operator(reader, reader.get(operators, name, "operators"), dim, name) for name in ("A1", "A2", "A3"))
    lambdas = reader.get(raw, "lambdas", "")
    if not isinstance(lambdas, list) or len(lambdas) != 3:
        reader.fail("lambdas", "expected three step sizes [lambda1, lambda2, lambda3]")
    lam = [reader.scalar(v, f"lambdas[{k}]") for k, v in enumerate(lambdas)]
    schedule_a = _parse_schedule(reader, reader.get(raw, "schedule_a", ""), "schedule_a")
    schedule_b = _parse_schedule(reader, reader.get(raw, "schedule_b", ""), "schedule_b")

    # f and S are placeholders until the oracle point (if referenced) is known
    partial = ProblemSpec(
        C, A1, A2, A3, lam[0], lam[1], lam[2],
        ContractionMap.scaled(0.5, C.project(np.zeros(dim))), Identity(),
        schedule_a, schedule_b, space,
    )
    resolved = {}

    def oracle_point():
        if "p" not in resolved:
            violations = step_violations(partial)
            if violations:
                raise ValidationError(violations)
            try:
                resolved["p"] = fixed_point_G(partial)
            except ContractionError as e:
                reader.fail("center", str(e))
            logger.debug("oracle center resolved to %s", resolved["p"].tolist())
        return resolved["p"]

    f = _parse_contraction(reader, reader.get(raw, "f", ""), dim, oracle_point)
    S = _parse_nonexpansive(reader, reader.get(raw, "S", ""), dim, oracle_point)
    return ProblemSpec(C, A1, A2, A3, lam[0], lam[1], lam[2], f, S, schedule_a, schedule_b, space)


def max_iter_override():
    value = os.environ.get(MAX_ITER_ENV)
    if value is None or value.strip() == "":
        return None
    try:
        result = int(value)
    except ValueError:
        raise ConfigError(f"{MAX_ITER_ENV}={value!r} is not an integer")
    if result < 1:
        raise ConfigError(f"{MAX_ITER_ENV}={value!r} must be at least 1")
    return result


def config_from_dict(raw, source="<config>", text=None):
    reader = _Reader(source, text)
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be an object")
    problem = build_problem(raw, source, text)
    x1 = reader.vector(reader.get(raw, "x1", ""), problem.dim, "x1")
    tol = reader.positive(reader.get(raw, "tol", "", DEFAULT_TOL), "tol")
    max_iter = reader.integer(reader.get(raw, "max_iter", "", DEFAULT_MAX_ITER), "max_iter")
    if max_iter < 1:
        reader.fail("max_iter", "must be at least 1")
    override = max_iter_override()
    if override is not None:
        logger.info("%s overrides max_iter: %d -> %d", MAX_ITER_ENV, max_iter, override)
        max_iter = override
    seed = reader.integer(reader.get(raw, "seed", "", 0), "seed")
    output = reader.get(raw, "output", "", None)
    return RunConfig(problem, x1, tol, max_iter, seed, Path(output) if output else None, source, raw)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e.strerror}")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}")
    return config_from_dict(raw, str(path), text)


def apply_override(raw, parameter, value):
    """Copy of a config document with one swept parameter replaced."""
    raw = copy.deepcopy(raw)
    if parameter in ("lambda1", "lambda2", "lambda3"):
        lambdas = raw.get("lambdas")
        if not isinstance(lambdas, list) or len(lambdas) != 3:
            raise ConfigError("lambdas: expected three step sizes")
        lambdas[int(parameter[-1]) - 1] = value
    elif parameter == "tol":
        raw["tol"] = value
    elif parameter == "schedule_shift":
        schedule = raw.get("schedule_a", {})
        if schedule.get("family") not in ("harmonic", "power_law"):
            raise ConfigError("schedule_shift sweeps need a harmonic or power_law schedule_a")
        schedule["shift"] = value
    else:
        raise ConfigError(f"unknown sweep parameter {parameter!r}; choose from {', '.join(SWEEP_PARAMETERS)}")
    return raw
