"""Separable CMA-ES on the unit cube, diagonal covariance only.

The covariance matrix is restricted to its diagonal, giving linear time and
space cost per generation, and the covariance learning rate is enlarged by
the factor (d + 2) / 3 relative to the full-matrix strategy. Candidates are
sampled as u = mean + sigma * sqrt(diag_c) * z with standard normal z,
resampled up to 100 times when they leave [0, 1]^d and clamped afterwards.
The update uses weighted recombination of the top mu = floor(lambda / 2)
candidates (maximization), cumulative step-size adaptation, and rank-one
plus rank-mu updates of the diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidValue, UnsupportedDomain
from ..space import CATEGORICAL, Params, SearchSpace, from_unit_cube

_MAX_RESAMPLES = 100


def default_lambda(dim: int) -> int:
    """Default population size 4 + floor(3 ln d)."""
    return 4 + int(3 * math.log(dim))


@dataclass
class SepCmaState:
    mean: np.ndarray
    sigma: float
    diag_c: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    generation: int = 0
    pending: np.ndarray | None = None  # last asked batch, unit-cube rows

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "sigma": self.sigma,
            "diag_c": self.diag_c.tolist(),
            "p_sigma": self.p_sigma.tolist(),
            "p_c": self.p_c.tolist(),
            "generation": self.generation,
            "pending": None if self.pending is None else self.pending.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SepCmaState":
        return cls(
            mean=np.asarray(d["mean"], dtype=float),
            sigma=float(d["sigma"]),
            diag_c=np.asarray(d["diag_c"], dtype=float),
            p_sigma=np.asarray(d["p_sigma"], dtype=float),
            p_c=np.asarray(d["p_c"], dtype=float),
            generation=int(d["generation"]),
            pending=None if d.get("pending") is None else np.asarray(d["pending"], dtype=float),
        )


class SepCmaEs:
    """Core strategy over [0, 1]^d; ask returns unit-cube rows, tell maximizes."""

    def __init__(self, dim: int, lam: int | None = None, sigma0: float = 0.3,
                 rng: np.random.Generator | None = None):
        if dim < 1:
            raise InvalidValue("dimension must be >= 1")
        self.dim = dim
        self.lam = lam if lam is not None else default_lambda(dim)
        if self.lam < 2:
            raise InvalidValue("lambda must be >= 2")
        self.rng = rng if rng is not None else np.random.default_rng()

        self.mu = self.lam // 2
        w = np.log(self.mu + 1.0) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mu_eff = 1.0 / float(np.sum(self.weights**2))

        d_ = float(dim)
        self.c_sigma = (self.mu_eff + 2.0) / (d_ + self.mu_eff + 3.0)
        self.d_sigma = (
            1.0 + 2.0 * max(0.0, math.sqrt((self.mu_eff - 1.0) / (d_ + 1.0)) - 1.0) + self.c_sigma
        )
        self.c_c = 4.0 / (d_ + 4.0)
        c_cov = (1.0 / self.mu_eff) * 2.0 / (d_ + math.sqrt(2.0)) ** 2 + (
            1.0 - 1.0 / self.mu_eff
        ) * min(1.0, (2.0 * self.mu_eff - 1.0) / ((d_ + 2.0) ** 2 + self.mu_eff))
        c_cov = min(1.0, ((d_ + 2.0) / 3.0) * c_cov)  # separable speed-up
        self.c_1 = c_cov / self.mu_eff
        self.c_mu = c_cov * (1.0 - 1.0 / self.mu_eff)
        self.chi_n = math.sqrt(d_) * (1.0 - 1.0 / (4.0 * d_) + 1.0 / (21.0 * d_**2))

        self.state = SepCmaState(
            mean=np.full(dim, 0.5),
            sigma=float(sigma0),
            diag_c=np.ones(dim),
            p_sigma=np.zeros(dim),
            p_c=np.zeros(dim),
        )

    def ask(self) -> np.ndarray:
        """Sample lambda candidates in [0, 1]^d; kept as the pending batch."""
        s = self.state
        std = s.sigma * np.sqrt(s.diag_c)
        batch = np.empty((self.lam, self.dim))
        for k in range(self.lam):
            u = s.mean + std * self.rng.standard_normal(self.dim)
            for _ in range(_MAX_RESAMPLES - 1):
                if np.all((u >= 0.0) & (u <= 1.0)):
                    break
                u = s.mean + std * self.rng.standard_normal(self.dim)
            batch[k] = np.clip(u, 0.0, 1.0)
        s.pending = batch
        return batch.copy()

    def tell(self, us: np.ndarray, objectives) -> None:
        """Update mean, paths, sigma and the diagonal covariance (maximization)."""
        us = np.asarray(us, dtype=float)
        objectives = np.asarray(objectives, dtype=float)
        if us.shape != (self.lam, self.dim):
            raise InvalidValue(f"tell expects a batch of shape ({self.lam}, {self.dim})")
        if not np.all(np.isfinite(objectives)):
            raise InvalidValue("non-finite objective passed to tell")

        s = self.state
        # stable sort: ties keep ask order
        order = np.argsort(-objectives, kind="stable")[: self.mu]
        sel = us[order]

        old_mean = s.mean
        new_mean = self.weights @ sel
        y = (new_mean - old_mean) / s.sigma
        z = y / np.sqrt(s.diag_c)

        s.p_sigma = (1.0 - self.c_sigma) * s.p_sigma + math.sqrt(
            self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff
        ) * z

        gen = s.generation + 1
        ps_norm = float(np.linalg.norm(s.p_sigma))
        h_sigma = (
            ps_norm / math.sqrt(1.0 - (1.0 - self.c_sigma) ** (2.0 * gen))
            < (1.4 + 2.0 / (self.dim + 1.0)) * self.chi_n
        )

        s.p_c = (1.0 - self.c_c) * s.p_c + (
            math.sqrt(self.c_c * (2.0 - self.c_c) * self.mu_eff) * y if h_sigma else 0.0
        )

        ys = (sel - old_mean) / s.sigma
        rank_mu = self.weights @ (ys * ys)
        # decay adjusted for the variance lost when h_sigma stalls the path
        c1_adj = self.c_1 * (1.0 - (0.0 if h_sigma else 1.0) * self.c_c * (2.0 - self.c_c))
        s.diag_c = (
            (1.0 - c1_adj - self.c_mu) * s.diag_c
            + self.c_1 * s.p_c * s.p_c
            + self.c_mu * rank_mu
        )
        s.diag_c = np.maximum(s.diag_c, 1e-30)

        s.sigma = s.sigma * math.exp(
            min(1.0, (self.c_sigma / self.d_sigma) * (ps_norm / self.chi_n - 1.0))
        )
        s.mean = new_mean
        s.generation = gen
        s.pending = None


class SepCmaEsOptimizer:
    """Ask/tell wrapper decoding unit-cube samples through the search space."""

    kind = "sepcmaes"

    def __init__(self, space: SearchSpace, lam: int | None, sigma0: float,
                 rng: np.random.Generator):
        for p in space:
            if p.kind == CATEGORICAL:
                raise UnsupportedDomain(f"sep-CMA-ES cannot handle categorical {p.name!r}")
        self._space = space
        self._es = SepCmaEs(len(space), lam=lam, sigma0=sigma0, rng=rng)

    @property
    def lam(self) -> int:
        return self._es.lam

    @property
    def state(self) -> SepCmaState:
        return self._es.state

    def ask(self, history, n: int) -> list[Params]:
        batch = self._es.ask()
        return [from_unit_cube(u, self._space) for u in batch]

    def tell(self, batch) -> None:
        """Consume one evaluated generation (in ask order); partial batches
        from a truncated final generation are dropped without an update."""
        pending = self._es.state.pending
        if pending is None:
            return
        if len(batch) < self._es.lam:
            self._es.state.pending = None
            return
        objectives = [b.objective for b in batch]
        self._es.tell(pending, objectives)

    def state_dict(self) -> dict:
        return {"rng": self._es.rng.bit_generator.state, "es": self._es.state.to_dict()}

    def load_state_dict(self, state: dict) -> None:
        rng = np.random.default_rng()
        rng.bit_generator.state = state["rng"]
        self._es.rng = rng
        self._es.state = SepCmaState.from_dict(state["es"])
