"""Ask/tell suggestion engines: grid, random, TPE, and separable CMA-ES.

All optimizers maximize a scalar objective; they never see raw metrics.
``ask`` proposes parameter assignments and may consume the optimizer's
random stream; ``tell`` delivers the evaluated batch (in ask order) and is
the only call that mutates algorithmic state. Identical (history, config,
seed) produce identical suggestions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, Exhausted
from ..space import Params, SearchSpace, grid_points, sample_uniform
from .sepcma import SepCmaEsOptimizer, SepCmaState, default_lambda
from .tpe import TpeConfig, TpeSplit, tpe_split, tpe_suggest

__all__ = [
    "ObservedTrial",
    "OptimizerConfig",
    "TpeConfig",
    "TpeSplit",
    "SepCmaConfig",
    "SepCmaState",
    "GridOptimizer",
    "RandomOptimizer",
    "TpeOptimizer",
    "SepCmaEsOptimizer",
    "make_optimizer",
    "tpe_split",
    "tpe_suggest",
    "default_lambda",
]


@dataclass(frozen=True)
class ObservedTrial:
    """History record handed to optimizers: id, parameters, scalar objective."""

    trial_id: int
    params: Params
    objective: float


@dataclass
class SepCmaConfig:
    lam: int | None = None  # default 4 + floor(3 ln d)
    sigma0: float = 0.3  # unit-cube scale

    def validate(self):
        if self.lam is not None and self.lam < 2:
            raise ConfigError("sepcmaes lambda must be >= 2")
        if self.sigma0 <= 0:
            raise ConfigError("sepcmaes sigma0 must be positive")


@dataclass
class OptimizerConfig:
    kind: str = "random"
    tpe: TpeConfig = field(default_factory=TpeConfig)
    sepcmaes: SepCmaConfig = field(default_factory=SepCmaConfig)
    resolution: dict[str, int] | None = None  # grid only

    def validate(self):
        if self.kind not in ("grid", "random", "tpe", "sepcmaes"):
            raise ConfigError(f"unknown optimizer kind {self.kind!r}")
        self.tpe.validate()
        self.sepcmaes.validate()


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _restore_rng(state: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng


class GridOptimizer:
    """Deterministic sweep through the grid in enumeration order."""

    kind = "grid"

    def __init__(self, space: SearchSpace, resolution: dict[str, int]):
        self._points = grid_points(space, resolution)
        self._cursor = 0

    def ask(self, history, n: int) -> list[Params]:
        if self._cursor >= len(self._points):
            raise Exhausted(f"grid of {len(self._points)} points is exhausted")
        batch = self._points[self._cursor : self._cursor + n]
        self._cursor += len(batch)
        return [dict(p) for p in batch]

    def tell(self, batch) -> None:
        pass

    def state_dict(self) -> dict:
        return {"cursor": self._cursor}

    def load_state_dict(self, state: dict) -> None:
        self._cursor = int(state["cursor"])


class RandomOptimizer:
    """Seeded uniform sampling, independent of history."""

    kind = "random"

    def __init__(self, space: SearchSpace, rng: np.random.Generator):
        self._space = space
        self._rng = rng

    def ask(self, history, n: int) -> list[Params]:
        return [sample_uniform(self._space, self._rng) for _ in range(n)]

    def tell(self, batch) -> None:
        pass

    def state_dict(self) -> dict:
        return {"rng": _rng_state(self._rng)}

    def load_state_dict(self, state: dict) -> None:
        self._rng = _restore_rng(state["rng"])


class TpeOptimizer:
    """Tree-structured Parzen Estimator over the scalar objective.

    Falls back to uniform sampling (on the same random stream) until the
    history reaches ``n_startup`` trials, so TPE with a large enough startup
    count is observationally identical to random search.
    """

    kind = "tpe"

    def __init__(self, space: SearchSpace, config: TpeConfig, rng: np.random.Generator):
        self._space = space
        self._config = config
        self._rng = rng

    def ask(self, history, n: int) -> list[Params]:
        out = []
        for _ in range(n):
            if len(history) < max(self._config.n_startup, 2):
                out.append(sample_uniform(self._space, self._rng))
            else:
                out.append(tpe_suggest(history, self._space, self._config, self._rng))
        return out

    def tell(self, batch) -> None:
        pass

    def state_dict(self) -> dict:
        return {"rng": _rng_state(self._rng)}

    def load_state_dict(self, state: dict) -> None:
        self._rng = _restore_rng(state["rng"])


def make_optimizer(config: OptimizerConfig, space: SearchSpace, seed: int):
    """Build the configured optimizer with its own generator seeded by ``seed``."""
    config.validate()
    rng = np.random.default_rng(seed)
    if config.kind == "grid":
        if not config.resolution and any(p.kind != "categorical" for p in space):
            raise ConfigError("grid optimizer needs a resolution map")
        return GridOptimizer(space, config.resolution or {})
    if config.kind == "random":
        return RandomOptimizer(space, rng)
    if config.kind == "tpe":
        return TpeOptimizer(space, config.tpe, rng)
    if config.kind == "sepcmaes":
        return SepCmaEsOptimizer(space, config.sepcmaes.lam, config.sepcmaes.sigma0, rng)
    raise ConfigError(f"unknown optimizer kind {config.kind!r}")
