"""Typed hyperparameter domains: grid enumeration, sampling, unit-cube codec.

Spaces are immutable after construction. Sampling functions take a
``numpy.random.Generator`` owned by the caller and confined to one logical
thread; the same seed yields a bit-identical sequence of draws, and
deterministic child streams are forked with ``rng.spawn(n)``. Log domains
sample and grid evenly in log scale. The unit-cube codec maps numeric
dimensions to [0, 1]^d for the continuous optimizers; integer dimensions
use evenly spaced cell centers so decoding never favors an endpoint.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidResolution, InvalidValue, UnsupportedDomain

CONTINUOUS = "continuous"
LOG_CONTINUOUS = "log_continuous"
INTEGER = "integer"
LOG_INTEGER = "log_integer"
CATEGORICAL = "categorical"

NUMERIC_KINDS = (CONTINUOUS, LOG_CONTINUOUS, INTEGER, LOG_INTEGER)
LOG_KINDS = (LOG_CONTINUOUS, LOG_INTEGER)
INTEGER_KINDS = (INTEGER, LOG_INTEGER)

#: One hyperparameter assignment, keyed by parameter name.
Params = dict


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    low: float | None = None
    high: float | None = None
    choices: tuple | None = None

    def __post_init__(self):
        if self.kind == CATEGORICAL:
            if not self.choices or len(set(self.choices)) != len(self.choices):
                raise InvalidValue(f"param {self.name!r}: categorical needs distinct choices")
            return
        if self.kind not in NUMERIC_KINDS:
            raise InvalidValue(f"param {self.name!r}: unknown kind {self.kind!r}")
        lo, hi = self.low, self.high
        if lo is None or hi is None or not (math.isfinite(lo) and math.isfinite(hi)):
            raise InvalidValue(f"param {self.name!r}: bounds must be finite")
        if self.kind in LOG_KINDS and lo <= 0:
            raise InvalidValue(f"param {self.name!r}: log domain needs low > 0")
        if self.kind in INTEGER_KINDS:
            if int(lo) != lo or int(hi) != hi:
                raise InvalidValue(f"param {self.name!r}: integer bounds must be integral")
            if lo > hi:
                raise InvalidValue(f"param {self.name!r}: needs low <= high")
        elif not lo < hi:
            raise InvalidValue(f"param {self.name!r}: needs low < high")

    def contains(self, value) -> bool:
        if self.kind == CATEGORICAL:
            return value in self.choices
        if self.kind in INTEGER_KINDS:
            return isinstance(value, (int, np.integer)) and self.low <= value <= self.high
        return (
            isinstance(value, (int, float, np.floating))
            and math.isfinite(float(value))
            and self.low <= float(value) <= self.high
        )


def continuous(name: str, low: float, high: float) -> ParamSpec:
    return ParamSpec(name, CONTINUOUS, float(low), float(high))


def log_continuous(name: str, low: float, high: float) -> ParamSpec:
    return ParamSpec(name, LOG_CONTINUOUS, float(low), float(high))


def integer(name: str, low: int, high: int) -> ParamSpec:
    return ParamSpec(name, INTEGER, int(low), int(high))


def log_integer(name: str, low: int, high: int) -> ParamSpec:
    return ParamSpec(name, LOG_INTEGER, int(low), int(high))


def categorical(name: str, choices) -> ParamSpec:
    return ParamSpec(name, CATEGORICAL, choices=tuple(choices))


@dataclass(frozen=True)
class SearchSpace:
    params: tuple[ParamSpec, ...]

    def __init__(self, params):
        object.__setattr__(self, "params", tuple(params))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise InvalidValue("parameter names must be unique within a space")

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def numeric_only(self) -> bool:
        return all(p.kind != CATEGORICAL for p in self.params)

    def spec(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def validate(self, params: Params) -> None:
        for p in self.params:
            if p.name not in params:
                raise InvalidValue(f"missing parameter {p.name!r}")
            if not p.contains(params[p.name]):
                raise InvalidValue(f"value {params[p.name]!r} outside domain of {p.name!r}")


def _axis_values(spec: ParamSpec, r: int) -> list:
    """Grid values for one dimension: r points, endpoints included, ascending.

    r == 1 yields the midpoint (geometric midpoint for log domains). Integer
    domains round to the nearest integer and drop duplicates, so the axis may
    hold fewer than r distinct values.
    """
    if spec.kind == CATEGORICAL:
        return list(spec.choices)
    if r < 1:
        raise InvalidResolution(f"resolution for {spec.name!r} must be >= 1, got {r}")
    lo, hi = spec.low, spec.high
    if spec.kind in LOG_KINDS:
        lo, hi = math.log(lo), math.log(hi)
    if r == 1:
        points = [0.5 * (lo + hi)]
    else:
        points = [lo + (hi - lo) * i / (r - 1) for i in range(r)]
    if spec.kind in LOG_KINDS:
        points = [math.exp(x) for x in points]
    if spec.kind in INTEGER_KINDS:
        seen = []
        for x in points:
            v = min(int(spec.high), max(int(spec.low), round(x)))
            if v not in seen:
                seen.append(v)
        return seen
    if r > 1:
        # snap endpoints exactly, log round-trips can drift in the last ulp
        points[0] = spec.low
        points[-1] = spec.high
    return points


def grid_points(space: SearchSpace, resolution: dict[str, int]) -> list[Params]:
    """Full Cartesian grid in declaration order, last dimension fastest.

    ``resolution`` maps each non-categorical dimension to its point count;
    categorical dimensions enumerate every choice. The result has exactly
    the product of the per-axis counts, with no duplicates.
    """
    axes = []
    for p in space:
        if p.kind == CATEGORICAL:
            axes.append(_axis_values(p, 0))
            continue
        if p.name not in resolution:
            raise InvalidResolution(f"no resolution given for {p.name!r}")
        r = resolution[p.name]
        if not isinstance(r, int) or r < 1:
            raise InvalidResolution(f"resolution for {p.name!r} must be a positive integer")
        axes.append(_axis_values(p, r))
    names = space.names
    return [dict(zip(names, combo)) for combo in itertools.product(*axes)]


def sample_uniform(space: SearchSpace, rng: np.random.Generator) -> Params:
    """One uniform draw per dimension (uniform in log scale for log domains)."""
    out: Params = {}
    for p in space:
        if p.kind == CATEGORICAL:
            out[p.name] = p.choices[int(rng.integers(len(p.choices)))]
        elif p.kind == CONTINUOUS:
            out[p.name] = float(rng.uniform(p.low, p.high))
        elif p.kind == LOG_CONTINUOUS:
            out[p.name] = float(math.exp(rng.uniform(math.log(p.low), math.log(p.high))))
        elif p.kind == INTEGER:
            out[p.name] = int(rng.integers(p.low, p.high + 1))
        else:  # LOG_INTEGER
            x = math.exp(rng.uniform(math.log(p.low), math.log(p.high)))
            out[p.name] = int(min(p.high, max(p.low, round(x))))
    return out


def _check_numeric(space: SearchSpace) -> None:
    for p in space:
        if p.kind == CATEGORICAL:
            raise UnsupportedDomain(f"categorical dimension {p.name!r} has no cube encoding")


def to_unit_cube(params: Params, space: SearchSpace) -> np.ndarray:
    """Encode a parameter assignment as a point in [0, 1]^d.

    Integer dimensions encode value lo+i of n as the cell center (i+0.5)/n.
    """
    _check_numeric(space)
    u = np.empty(len(space))
    for d, p in enumerate(space):
        v = params[p.name]
        if p.kind == CONTINUOUS:
            u[d] = (v - p.low) / (p.high - p.low)
        elif p.kind == LOG_CONTINUOUS:
            u[d] = (math.log(v) - math.log(p.low)) / (math.log(p.high) - math.log(p.low))
        elif p.kind == INTEGER:
            n = int(p.high) - int(p.low) + 1
            u[d] = (v - p.low + 0.5) / n
        else:  # LOG_INTEGER
            lo, hi = math.log(p.low), math.log(p.high)
            u[d] = 0.5 if hi == lo else (math.log(v) - lo) / (hi - lo)
    return np.clip(u, 0.0, 1.0)


def from_unit_cube(u: np.ndarray, space: SearchSpace) -> Params:
    """Decode a point in [0, 1]^d back to parameters; clamps first, then rounds.

    Integer dimensions pick the cell whose center is nearest (cell i covers
    [i/n, (i+1)/n)); log-integer dimensions decode in log scale and round.
    """
    _check_numeric(space)
    if len(u) != len(space):
        raise InvalidValue(f"expected {len(space)} coordinates, got {len(u)}")
    out: Params = {}
    for d, p in enumerate(space):
        x = min(1.0, max(0.0, float(u[d])))
        if p.kind == CONTINUOUS:
            out[p.name] = p.low + x * (p.high - p.low)
        elif p.kind == LOG_CONTINUOUS:
            out[p.name] = float(
                math.exp(math.log(p.low) + x * (math.log(p.high) - math.log(p.low)))
            )
        elif p.kind == INTEGER:
            n = int(p.high) - int(p.low) + 1
            out[p.name] = int(p.low) + min(n - 1, int(x * n))
        else:  # LOG_INTEGER
            v = math.exp(math.log(p.low) + x * (math.log(p.high) - math.log(p.low)))
            out[p.name] = int(min(p.high, max(p.low, round(v))))
    return out
