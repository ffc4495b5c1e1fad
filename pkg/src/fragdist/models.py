"""Exceedance-count models with exact laws, samplers and approximation bounds.

Three models of the number ``N`` of exceedances among ``n`` observations:

* ``IndependentExceedanceModel``: independent indicators with probabilities
  ``p_i`` (``N`` is Poisson-binomial);
* ``TwoRunsModel``: ``X_i = min(Y_i, Y_{i+1})`` for i.i.d. ``Y`` with
  ``Y_{n+1} = Y_1``, so an exceedance needs two consecutive exceedances of
  ``Y`` around the circle;
* ``ZeroInflatedModel``: a latent switch that is on with probability ``q``;
  when on, the ``n`` indicators are i.i.d. Bernoulli(``p1``).

Sampling uses numpy's PCG64.  Draws are produced in blocks of
``SAMPLE_BLOCK``; block ``b`` is generated by ``PCG64(SeedSequence(seed,
spawn_key=(b,)))``, so a batch depends only on ``(model, seed, count)`` and
not on how many workers produced it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .dist_core import (
    DEFAULT_TOL,
    NegBinParams,
    PmfVector,
    conditional_nb_pmf,
    conditional_poisson_pmf,
    conditional_truncate,
)
from .errors import InvalidParameter, OutOfRange
from .metrics import tv_distance
from .stein import G_m2_nb_exact, G_m2_poisson_exact

SAMPLE_BLOCK = 1 << 16
# indicator cells generated per call inside a block
_CELLS_PER_CHUNK = 1 << 22
GENERATOR_NAME = "numpy.PCG64/SeedSequence(seed, spawn_key=(block,))/block=65536"

MAX_INDEPENDENT_N = 100_000
MAX_TWORUNS_N = 10_000
MAX_ENUMERATION_N = 20
# slack on "exact_tv <= bound" for rounding in both sides
BOUND_SLACK = 1e-12


def _check_prob(name: str, value: float, lo_open: bool, hi_open: bool) -> float:
    value = float(value)
    ok = math.isfinite(value)
    ok = ok and (value > 0 if lo_open else value >= 0)
    ok = ok and (value < 1 if hi_open else value <= 1)
    if not ok:
        lo = "(" if lo_open else "["
        hi = ")" if hi_open else "]"
        raise InvalidParameter(f"{name} must lie in {lo}0, 1{hi}, got {value}")
    return value


def _check_n(n, lo: int) -> int:
    if int(n) != n or n < lo:
        raise InvalidParameter(f"n must be an integer >= {lo}, got {n}")
    return int(n)


@dataclass(frozen=True)
class IndependentExceedanceModel:
    p: tuple

    def __post_init__(self):
        p = tuple(_check_prob("p_i", x, False, False) for x in np.atleast_1d(self.p))
        if not p:
            raise InvalidParameter("need at least one observation")
        object.__setattr__(self, "p", p)

    @classmethod
    def iid(cls, n: int, p: float) -> "IndependentExceedanceModel":
        return cls((p,) * _check_n(n, 1))

    @property
    def n(self) -> int:
        return len(self.p)

    def to_dict(self) -> dict:
        return {"type": "independent", "p": list(self.p)}


@dataclass(frozen=True)
class TwoRunsModel:
    n: int
    p: float

    def __post_init__(self):
        object.__setattr__(self, "n", _check_n(self.n, 3))
        object.__setattr__(self, "p", _check_prob("p", self.p, True, True))

    def to_dict(self) -> dict:
        return {"type": "tworuns", "n": self.n, "p": self.p}


@dataclass(frozen=True)
class ZeroInflatedModel:
    n: int
    p1: float
    q: float

    def __post_init__(self):
        object.__setattr__(self, "n", _check_n(self.n, 1))
        object.__setattr__(self, "p1", _check_prob("p1", self.p1, True, True))
        object.__setattr__(self, "q", _check_prob("q", self.q, True, False))

    def to_dict(self) -> dict:
        return {"type": "zeroinflated", "n": self.n, "p1": self.p1, "q": self.q}


Model = IndependentExceedanceModel | TwoRunsModel | ZeroInflatedModel


def model_from_dict(data: dict) -> Model:
    """Build a model from ``{"type": ..., ...}``.

    ``independent`` takes either a list ``p`` or a scalar ``p`` with ``n``.
    """
    if not isinstance(data, dict):
        raise InvalidParameter("model payload must be a JSON object")
    kind = str(data.get("type", "")).lower()
    try:
        if kind == "independent":
            p = data["p"]
            if np.ndim(p) == 0:
                return IndependentExceedanceModel.iid(data["n"], p)
            return IndependentExceedanceModel(tuple(p))
        if kind == "tworuns":
            return TwoRunsModel(data["n"], data["p"])
        if kind == "zeroinflated":
            return ZeroInflatedModel(data["n"], data["p1"], data["q"])
    except KeyError as exc:
        raise InvalidParameter(f"model payload missing field {exc}") from None
    raise InvalidParameter(f"unknown model type {kind!r}; expected independent, tworuns or zeroinflated")


# ---------------------------------------------------------------------------
# exact laws
# ---------------------------------------------------------------------------

def poisson_binomial_pmf(model: IndependentExceedanceModel) -> PmfVector:
    if model.n > MAX_INDEPENDENT_N:
        raise OutOfRange(f"n = {model.n} exceeds {MAX_INDEPENDENT_N}")
    w = np.zeros(model.n + 1)
    w[0] = 1.0
    for k, p in enumerate(model.p, start=1):
        # w[0..k] <- (1-p) w + p * shift(w)
        w[1:k + 1] = (1.0 - p) * w[1:k + 1] + p * w[:k]
        w[0] *= 1.0 - p
    return PmfVector(0, _trim(w), 0.0)


def _trim(w: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(w)
    return w[: nz[-1] + 1] if nz.size else w[:1]


def tworuns_pmf(model: TwoRunsModel) -> PmfVector:
    """Exact law of the circular two-runs count by transfer over ``(Y_i, count)``."""
    n, p = model.n, model.p
    if n > MAX_TWORUNS_N:
        raise OutOfRange(f"n = {n} exceeds {MAX_TWORUNS_N}")
    total = np.zeros(n + 1)
    for first, w_first in ((0, 1.0 - p), (1, p)):
        # dp[y][c]: Y_i = y and c adjacent pairs so far
        dp = np.zeros((2, n + 1))
        dp[first, 0] = w_first
        for _ in range(n - 1):
            new = np.zeros_like(dp)
            new[0] = (1.0 - p) * (dp[0] + dp[1])
            new[1] = p * dp[0]
            new[1, 1:] += p * dp[1, :-1]
            dp = new
        total += dp[0]
        if first:
            total[1:] += dp[1, :-1]
        else:
            total += dp[1]
    return PmfVector(0, _trim(total), 0.0)


def tworuns_enumeration_pmf(n: int, p: float) -> PmfVector:
    """Law of the two-runs count by summing over all ``2^n`` configurations."""
    n = _check_n(n, 3)
    p = _check_prob("p", p, True, True)
    if n > MAX_ENUMERATION_N:
        raise OutOfRange(f"enumeration needs n <= {MAX_ENUMERATION_N}, got {n}")
    codes = np.arange(1 << n, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n)) & 1
    ones = bits.sum(axis=1)
    pairs = (bits & np.roll(bits, -1, axis=1)).sum(axis=1)
    # exact integer tallies per (ones, pairs), then one weighted fsum per pair count
    table = np.zeros((n + 1, n + 1), dtype=np.int64)
    np.add.at(table, (ones, pairs), 1)
    weight = [p ** k * (1.0 - p) ** (n - k) for k in range(n + 1)]
    out = np.array([math.fsum(int(table[k, c]) * weight[k] for k in range(n + 1)) for c in range(n + 1)])
    return PmfVector(0, _trim(out), 0.0)


def zeroinflated_pmf(model: ZeroInflatedModel) -> PmfVector:
    k = np.arange(model.n + 1)
    w = model.q * stats.binom.pmf(k, model.n, model.p1)
    w[0] += 1.0 - model.q
    return PmfVector(0, w, 0.0)


def exact_pmf(model: Model) -> PmfVector:
    if isinstance(model, IndependentExceedanceModel):
        return poisson_binomial_pmf(model)
    if isinstance(model, TwoRunsModel):
        return tworuns_pmf(model)
    if isinstance(model, ZeroInflatedModel):
        return zeroinflated_pmf(model)
    raise InvalidParameter(f"not a model: {model!r}")


def tworuns_prob_lower_bound(model: TwoRunsModel) -> float:
    """Lower bound ``1 - exp(-lam (1 - p)) - (5p^2 - 4p^3)`` on ``P(N >= 1)``, ``lam = n p^2``.

    Only a cross-check; the bounds use the exact probability.
    """
    p = model.p
    lam = model.n * p * p
    return -math.expm1(-lam * (1.0 - p)) - (5.0 * p * p - 4.0 * p ** 3)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SampleBatch:
    counts: np.ndarray
    seed: int
    model: dict
    generator: str = GENERATOR_NAME

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "model": self.model,
            "generator": self.generator,
            "counts": [int(c) for c in self.counts],
        }


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _draw_block(model: Model, rng: np.random.Generator, size: int) -> np.ndarray:
    p = np.asarray(model.p) if isinstance(model, IndependentExceedanceModel) else None
    width = model.n
    rows = max(1, _CELLS_PER_CHUNK // width)
    out = np.empty(size, dtype=np.int64)
    for lo in range(0, size, rows):
        hi = min(size, lo + rows)
        u = rng.random((hi - lo, width))
        if isinstance(model, IndependentExceedanceModel):
            out[lo:hi] = (u < p).sum(axis=1)
        elif isinstance(model, TwoRunsModel):
            y = u < model.p
            out[lo:hi] = (y & np.roll(y, -1, axis=1)).sum(axis=1)
        else:
            on = rng.random(hi - lo) < model.q
            out[lo:hi] = np.where(on, (u < model.p1).sum(axis=1), 0)
    return out


def sample(model: Model, seed: int, count: int, workers: int = 1) -> SampleBatch:
    """``count`` i.i.d. draws of the exceedance count, simulated from the observations."""
    if int(count) != count or count < 1:
        raise InvalidParameter(f"count must be an integer >= 1, got {count}")
    if int(seed) != seed or not 0 <= seed < 1 << 64:
        raise InvalidParameter(f"seed must be an unsigned 64-bit integer, got {seed}")
    if int(workers) != workers or workers < 1:
        raise InvalidParameter(f"workers must be >= 1, got {workers}")
    seed, count = int(seed), int(count)
    sizes = [min(SAMPLE_BLOCK, count - lo) for lo in range(0, count, SAMPLE_BLOCK)]

    def block(b: int) -> np.ndarray:
        return _draw_block(model, _block_rng(seed, b), sizes[b])

    if workers == 1 or len(sizes) == 1:
        parts = [block(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            parts = list(pool.map(block, range(len(sizes))))
    return SampleBatch(np.concatenate(parts), seed, model.to_dict())


# ---------------------------------------------------------------------------
# approximation bounds for the conditional law given N >= 1
# ---------------------------------------------------------------------------

def _prob_some_exceedance(p: Sequence[float]) -> float:
    with np.errstate(divide="ignore"):
        log_none = float(np.sum(np.log1p(-np.asarray(p, dtype=float))))
    return -math.expm1(log_none)


def example1_bound(model: IndependentExceedanceModel) -> float:
    """``G(lam) sum p_i^2 / (1 - prod(1 - p_i))`` with ``lam = sum p_i``.

    ``G(lam) = (1 - e^-lam - lam e^-lam) / (lam (1 - e^-lam))`` is the exact
    increment factor of the Poisson law conditioned on ``>= 1``.
    """
    p = np.asarray(model.p)
    lam = float(p.sum())
    if lam <= 0:
        raise InvalidParameter("all exceedance probabilities are zero")
    return G_m2_poisson_exact(lam, 1) * float(np.dot(p, p)) / _prob_some_exceedance(p)


@dataclass(frozen=True)
class TwoRunsBound:
    a: float
    b: float
    bound: float
    asymptotic: float
    prob_at_least_one: float

    @property
    def nb_params(self) -> NegBinParams:
        return NegBinParams(self.a / self.b, self.b)

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "r": self.a / self.b,
            "bound": self.bound,
            "asymptotic": self.asymptotic,
            "prob_at_least_one": self.prob_at_least_one,
        }


# constant carried over from the unconditional two-runs analysis
TWORUNS_CONSTANT = 32.2


def tworuns_nb_params(model: TwoRunsModel) -> tuple[float, float]:
    """Return ``(a, b)``; the approximating law is ``NB(a / b, b)``."""
    p, n = model.p, model.n
    b = (2 * p - 3 * p * p) / (1 + 2 * p - 3 * p * p)
    a = (1 - b) * n * p * p
    return a, b


def example2_bound(model: TwoRunsModel) -> TwoRunsBound:
    a, b = tworuns_nb_params(model)
    p, n = model.p, model.n
    scale = p / math.sqrt((n - 1) * (1 - p) ** 3)
    g2 = G_m2_nb_exact(NegBinParams(a / b, b), 1)
    at_least_one = tworuns_pmf(model).mass_at_least(1)
    bound = TWORUNS_CONSTANT * scale * a * g2 / at_least_one
    return TwoRunsBound(a, b, bound, TWORUNS_CONSTANT / 2 * scale, at_least_one)


def example3_bound(model: ZeroInflatedModel) -> float:
    """``G(lam) n p1^2 / (1 - (1 - p1)^n)`` with ``lam = n p1``; free of ``q``.

    ``G`` is as in :func:`example1_bound`.  Tends to ``p1 / 2`` as ``p1 -> 0``.
    """
    lam = model.n * model.p1
    return G_m2_poisson_exact(lam, 1) * model.n * model.p1 ** 2 / _prob_some_exceedance([model.p1] * model.n)


def example3_bound_uncorrected(model: ZeroInflatedModel) -> float:
    """``p1 (1 - e^-lam - lam e^-lam) / (1 - (1 - p1)^n)``.

    This equals :func:`example3_bound` times ``1 - e^-lam``, i.e. it drops that
    factor from the denominator.  It behaves like ``n p1^2 / 2`` for small ``p1``
    and falls below the exact distance, so it is not a valid bound; it is kept
    for diagnostics only.
    """
    lam = model.n * model.p1
    numer = float(stats.poisson.sf(1, lam))
    return model.p1 * numer / _prob_some_exceedance([model.p1] * model.n)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    model: dict
    approximation: dict
    m: int
    exact_tv: float
    bound: float
    ratio: float
    holds: bool

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "approximation": self.approximation,
            "m": self.m,
            "exact_tv": self.exact_tv,
            "bound": self.bound,
            "ratio": self.ratio,
            "holds": self.holds,
        }


def default_approximation(model: Model) -> dict:
    if isinstance(model, IndependentExceedanceModel):
        return {"family": "cond_poisson", "params": {"lam": float(sum(model.p))}}
    if isinstance(model, TwoRunsModel):
        a, b = tworuns_nb_params(model)
        return {"family": "cond_negbin", "params": {"r": a / b, "p": b}}
    if isinstance(model, ZeroInflatedModel):
        return {"family": "cond_poisson", "params": {"lam": model.n * model.p1}}
    raise InvalidParameter(f"not a model: {model!r}")


def _same_approximation(given: dict, expected: dict) -> bool:
    from .stein import canonical_family

    try:
        if canonical_family(given["family"]) != expected["family"]:
            return False
        params = given["params"]
    except (KeyError, TypeError):
        return False
    want = expected["params"]
    if not isinstance(params, dict):
        params = dict(zip(want, np.atleast_1d(params)))
    try:
        return all(math.isclose(float(params[k]), v, rel_tol=1e-9, abs_tol=1e-15) for k, v in want.items())
    except (KeyError, TypeError, ValueError):
        return False


def _approx_law(approx: dict, m: int, tol: float) -> PmfVector:
    params = approx["params"]
    if approx["family"] == "cond_poisson":
        return conditional_poisson_pmf(params["lam"], m, tol)
    return conditional_nb_pmf(NegBinParams(params["r"], params["p"]), m, tol)


def model_bound(model: Model) -> float:
    if isinstance(model, IndependentExceedanceModel):
        return example1_bound(model)
    if isinstance(model, TwoRunsModel):
        return example2_bound(model).bound
    return example3_bound(model)


def verify_bound(model: Model, approx: dict | None = None, m: int = 1, tol: float = DEFAULT_TOL) -> BoundReport:
    """Compare the exact conditional distance with the model's bound.

    ``approx`` defaults to the approximation the bound is stated for; any other
    choice is rejected because no bound is available for it.
    """
    if m != 1:
        raise InvalidParameter(f"bounds are available for m = 1 only, got m = {m}")
    expected = default_approximation(model)
    if approx is not None and not _same_approximation(approx, expected):
        raise InvalidParameter(f"no bound for approximation {approx!r}; expected {expected!r}")
    exact = conditional_truncate(exact_pmf(model), m)
    tv = tv_distance(exact, _approx_law(expected, m, tol)).tv
    bound = model_bound(model)
    ratio = tv / bound if bound > 0 else math.inf
    return BoundReport(model.to_dict(), expected, m, tv, bound, ratio, bool(tv <= bound + BOUND_SLACK))
