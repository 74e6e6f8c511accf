"""Tree-structured Parzen Estimator specialized to flat search spaces.

The history is split into "good" and "bad" trials by objective. Each
dimension gets two one-dimensional Parzen estimators, l (good) and g (bad);
candidates are drawn jointly from l and the one maximizing the density
ratio l/g (as a sum of per-dimension log-density differences) is suggested.

Numeric dimensions are modeled on a continuous "model scale": the native
scale for linear domains and the natural-log scale for log domains; integer
dimensions are modeled continuously and rounded on output. An estimator
over k observations is a mixture of k Gaussians truncated to the domain
plus one uniform prior component of weight ``prior_weight``; all
observation components have weight 1. The bandwidth of the component at a
sorted center is the distance to its farther adjacent neighbor (the single
adjacent gap at the ends, the whole domain width when k == 1), clamped to
[width / min(100, k), width]. Categorical dimensions use smoothed
frequencies (count + prior_weight) / (k + prior_weight * K).

Everything is deterministic given the history and the generator state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr, ndtri

from ..errors import ConfigError, InsufficientData, InvalidValue
from ..space import (
    CATEGORICAL,
    INTEGER_KINDS,
    LOG_KINDS,
    Params,
    ParamSpec,
    SearchSpace,
)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class TpeConfig:
    gamma: float = 0.25
    n_startup: int = 10
    n_candidates: int = 24
    prior_weight: float = 1.0

    def validate(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"tpe gamma must lie in (0, 1), got {self.gamma}")
        if self.n_startup < 1 or self.n_candidates < 1:
            raise ConfigError("tpe n_startup and n_candidates must be positive")
        if self.prior_weight <= 0:
            raise ConfigError("tpe prior_weight must be positive")


@dataclass
class TpeSplit:
    good: list
    bad: list


def tpe_split(history, gamma: float) -> TpeSplit:
    """Partition history: top max(1, ceil(gamma*n)) by objective are good.

    Ties are broken by earlier trial id into the good set, making the split
    deterministic for any history.
    """
    n = len(history)
    if n < 2:
        raise InsufficientData("tpe split needs at least 2 trials")
    for h in history:
        if not math.isfinite(h.objective):
            raise InvalidValue(f"trial {h.trial_id} has non-finite objective")
    ordered = sorted(history, key=lambda h: (-h.objective, h.trial_id))
    n_good = max(1, math.ceil(gamma * n))
    return TpeSplit(good=ordered[:n_good], bad=ordered[n_good:])


def _to_model(spec: ParamSpec, value) -> float:
    if spec.kind in LOG_KINDS:
        return math.log(value)
    return float(value)


def _from_model(spec: ParamSpec, x: float):
    if spec.kind in LOG_KINDS:
        v = math.exp(x)
    else:
        v = x
    if spec.kind in INTEGER_KINDS:
        return int(min(spec.high, max(spec.low, round(v))))
    return float(min(spec.high, max(spec.low, v)))


def _model_domain(spec: ParamSpec) -> tuple[float, float]:
    if spec.kind in LOG_KINDS:
        return math.log(spec.low), math.log(spec.high)
    return float(spec.low), float(spec.high)


class NumericParzen:
    """Mixture of domain-truncated Gaussians plus a uniform prior component."""

    def __init__(self, centers, lo: float, hi: float, prior_weight: float):
        self.lo = lo
        self.hi = hi
        width = hi - lo
        mus = np.sort(np.asarray(centers, dtype=float))
        k = len(mus)
        if k == 0:
            sigmas = np.empty(0)
        elif k == 1:
            sigmas = np.array([width])
        else:
            gaps = np.diff(mus)
            left = np.concatenate(([np.inf], gaps))
            right = np.concatenate((gaps, [np.inf]))
            farther = np.where(np.isinf(left), right, np.where(np.isinf(right), left, np.maximum(left, right)))
            sigmas = np.clip(farther, width / min(100, k), width)
        self.mus = mus
        self.sigmas = sigmas
        self.prior_weight = prior_weight
        self.total_weight = k + prior_weight
        # truncated-normal normalization per component
        if k:
            self._cdf_lo = ndtr((lo - mus) / sigmas)
            self._cdf_hi = ndtr((hi - mus) / sigmas)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        k = len(self.mus)
        probs = np.concatenate(([self.prior_weight], np.ones(k))) / self.total_weight
        comps = rng.choice(k + 1, size=size, p=probs)
        unif = rng.uniform(size=size)
        out = np.empty(size)
        for i, (c, u) in enumerate(zip(comps, unif)):
            if c == 0:
                out[i] = self.lo + u * (self.hi - self.lo)
            else:
                j = c - 1
                mass = self._cdf_hi[j] - self._cdf_lo[j]
                z = ndtri(self._cdf_lo[j] + u * mass)
                out[i] = self.mus[j] + self.sigmas[j] * z
        return np.clip(out, self.lo, self.hi)

    def logpdf(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        width = self.hi - self.lo
        terms = [np.full(xs.shape, math.log(self.prior_weight) - math.log(width))]
        for j in range(len(self.mus)):
            z = (xs - self.mus[j]) / self.sigmas[j]
            log_trunc = (
                -0.5 * z * z
                - _LOG_SQRT_2PI
                - math.log(self.sigmas[j])
                - math.log(self._cdf_hi[j] - self._cdf_lo[j])
            )
            terms.append(log_trunc)
        return logsumexp(np.stack(terms), axis=0) - math.log(self.total_weight)


class CategoricalParzen:
    """Smoothed frequency estimator over an ordered choice list."""

    def __init__(self, counts: np.ndarray, prior_weight: float):
        k = float(counts.sum())
        n_choices = len(counts)
        self.probs = (counts + prior_weight) / (k + prior_weight * n_choices)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(len(self.probs), size=size, p=self.probs)

    def logpdf_idx(self, idx: np.ndarray) -> np.ndarray:
        return np.log(self.probs[idx])


def _numeric_estimator(spec: ParamSpec, observations, prior_weight: float) -> NumericParzen:
    lo, hi = _model_domain(spec)
    centers = [_to_model(spec, o[spec.name]) for o in observations]
    return NumericParzen(centers, lo, hi, prior_weight)


def _categorical_estimator(spec: ParamSpec, observations, prior_weight: float) -> CategoricalParzen:
    counts = np.zeros(len(spec.choices))
    index = {c: i for i, c in enumerate(spec.choices)}
    for o in observations:
        counts[index[o[spec.name]]] += 1
    return CategoricalParzen(counts, prior_weight)


def tpe_suggest(history, space: SearchSpace, config: TpeConfig, rng: np.random.Generator) -> Params:
    """Draw ``n_candidates`` joint samples from l and return the l/g argmax."""
    split = tpe_split(history, config.gamma)
    good = [h.params for h in split.good]
    bad = [h.params for h in split.bad]

    n = config.n_candidates
    log_ratio = np.zeros(n)
    columns: dict[str, list] = {}
    for spec in space:
        if spec.kind != CATEGORICAL and spec.low == spec.high:
            # degenerate domain: the single value, no density contribution
            value = int(spec.low) if spec.kind in INTEGER_KINDS else float(spec.low)
            columns[spec.name] = [value] * n
            continue
        if spec.kind == CATEGORICAL:
            l_est = _categorical_estimator(spec, good, config.prior_weight)
            g_est = _categorical_estimator(spec, bad, config.prior_weight)
            idx = l_est.sample(rng, n)
            columns[spec.name] = [spec.choices[i] for i in idx]
            log_ratio += l_est.logpdf_idx(idx) - g_est.logpdf_idx(idx)
        else:
            l_est = _numeric_estimator(spec, good, config.prior_weight)
            g_est = _numeric_estimator(spec, bad, config.prior_weight)
            drawn = l_est.sample(rng, n)
            values = [_from_model(spec, x) for x in drawn]
            columns[spec.name] = values
            # score at the delivered (rounded/clamped) value so the ratio
            # matches the parameters actually proposed
            at = np.array([_to_model(spec, v) for v in values])
            log_ratio += l_est.logpdf(at) - g_est.logpdf(at)

    best = int(np.argmax(log_ratio))
    return {name: columns[name][best] for name in space.names}
