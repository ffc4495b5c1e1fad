"""Discrete distributions on the non-negative integers.

Everything here returns a :class:`PmfVector`: a contiguous block of point
masses starting at ``offset`` plus an explicit ``tail_mass`` accounting for
whatever lies beyond the last stored point.  Truncation is always driven by
tail mass, never by a fixed length.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize, stats

from .errors import (
    ConditioningOnNullEvent,
    InvalidParameter,
    OutOfRange,
)

DEFAULT_TOL = 1e-12
# e^{-lambda} underflows near 745; keep a wide margin.
MAX_TOTAL_RATE = 500.0


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PmfVector:
    """Finitely supported mass function with accounted tail.

    ``probs[i]`` is the mass at ``offset + i``; ``tail_mass`` is the mass
    beyond ``offset + len(probs) - 1``.
    """

    offset: int
    probs: np.ndarray
    tail_mass: float = 0.0
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        probs = _readonly(self.probs)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "offset", int(self.offset))
        object.__setattr__(self, "tail_mass", float(self.tail_mass))
        if self.offset < 0:
            raise InvalidParameter(f"offset must be >= 0, got {self.offset}")
        if probs.size == 0:
            raise InvalidParameter("probs must be non-empty")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise InvalidParameter("probs must be finite and non-negative")
        if not (self.tail_mass >= 0 and math.isfinite(self.tail_mass)):
            raise InvalidParameter(f"tail_mass must be finite and >= 0, got {self.tail_mass}")
        total = float(probs.sum()) + self.tail_mass
        if abs(1.0 - total) > 10 * self.tol:
            raise InvalidParameter(
                f"masses sum to {float(total)!r}, outside 1 +/- {10 * self.tol:g}"
            )

    @property
    def end(self) -> int:
        """One past the last stored support point."""
        return self.offset + self.probs.size

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.offset, self.end)

    def prob(self, k: int) -> float:
        if self.offset <= k < self.end:
            return float(self.probs[k - self.offset])
        return 0.0

    def mass_at_least(self, m: int) -> float:
        start = max(m - self.offset, 0)
        return float(self.probs[start:].sum()) + self.tail_mass

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    def dense(self, lo: int, hi: int) -> np.ndarray:
        """Masses on ``lo..hi-1`` as a plain array (zeros outside storage)."""
        out = np.zeros(hi - lo)
        a, b = max(lo, self.offset), min(hi, self.end)
        if a < b:
            out[a - lo:b - lo] = self.probs[a - self.offset:b - self.offset]
        return out

    def as_dict(self) -> dict[int, float]:
        return {int(k): float(p) for k, p in zip(self.support, self.probs) if p != 0.0}

    def to_dict(self) -> dict:
        return {
            "offset": self.offset,
            "probs": [float(p) for p in self.probs],
            "tail_mass": self.tail_mass,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict, tol: float = DEFAULT_TOL) -> "PmfVector":
        try:
            return cls(int(data["offset"]), data["probs"], float(data.get("tail_mass", 0.0)), tol)
        except (KeyError, TypeError) as exc:
            raise InvalidParameter(f"malformed PmfVector payload: {exc}") from None

    @classmethod
    def from_json(cls, text: str, tol: float = DEFAULT_TOL) -> "PmfVector":
        return cls.from_dict(json.loads(text), tol)

    @classmethod
    def point_mass(cls, k: int, tol: float = DEFAULT_TOL) -> "PmfVector":
        return cls(k, [1.0], 0.0, tol)


@dataclass(frozen=True, eq=False)
class ClusterDistribution:
    """Law of a cluster size on ``1..J``; ``pi[0]`` is the mass at 1."""

    pi: np.ndarray

    def __post_init__(self):
        pi = _readonly(self.pi)
        object.__setattr__(self, "pi", pi)
        if pi.size == 0:
            raise InvalidParameter("cluster distribution needs J >= 1")
        if not np.all(np.isfinite(pi)) or np.any(pi < 0):
            raise InvalidParameter("cluster probabilities must be finite and non-negative")
        if abs(float(pi.sum()) - 1.0) > 1e-12:
            raise InvalidParameter(f"cluster probabilities sum to {float(pi.sum())!r}, not 1")

    @property
    def J(self) -> int:
        return int(self.pi.size)

    def as_pmf(self, tol: float = DEFAULT_TOL) -> PmfVector:
        return PmfVector(1, self.pi, 0.0, tol)

    @classmethod
    def point_mass(cls, size: int) -> "ClusterDistribution":
        pi = np.zeros(size)
        pi[-1] = 1.0
        return cls(pi)

    @classmethod
    def uniform(cls, sizes: Iterable[int]) -> "ClusterDistribution":
        sizes = sorted(set(int(s) for s in sizes))
        pi = np.zeros(sizes[-1])
        pi[np.array(sizes) - 1] = 1.0 / len(sizes)
        return cls(pi)


@dataclass(frozen=True, eq=False)
class CompoundPoissonParams:
    """Rates ``lambdas[j-1]`` of clusters of size ``j``."""

    lambdas: np.ndarray

    def __post_init__(self):
        lam = _readonly(self.lambdas)
        object.__setattr__(self, "lambdas", lam)
        if lam.size == 0 or not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise InvalidParameter("rates must be a non-empty list of finite non-negative reals")
        if lam.sum() <= 0:
            raise InvalidParameter("total rate must be positive")

    @property
    def J(self) -> int:
        return int(self.lambdas.size)

    @property
    def lambda_total(self) -> float:
        return float(self.lambdas.sum())

    @property
    def pi(self) -> ClusterDistribution:
        pi = self.lambdas / self.lambda_total
        return ClusterDistribution(pi / pi.sum())

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(1, self.J + 1), self.lambdas))

    @classmethod
    def from_rate(cls, rate: float, pi: ClusterDistribution) -> "CompoundPoissonParams":
        if not (rate > 0 and math.isfinite(rate)):
            raise InvalidParameter(f"rate must be positive and finite, got {rate}")
        return cls(rate * pi.pi)


@dataclass(frozen=True)
class NegBinParams:
    r: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r > 0):
            raise InvalidParameter(f"NB r must be > 0, got {self.r}")
        if not (0.0 < self.p < 1.0):
            raise InvalidParameter(f"NB p must lie in (0, 1), got {self.p}")

    @property
    def mean(self) -> float:
        return self.r * self.p / (1.0 - self.p)

    def scipy(self):
        # scipy's nbinom counts failures with success probability 1 - p
        return stats.nbinom(self.r, 1.0 - self.p)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def _check_tol(tol: float) -> None:
    if not (0.0 < tol < 1.0):
        raise InvalidParameter(f"tol must lie in (0, 1), got {tol}")


def _smallest_k_with_sf_below(dist, level: float, start: int = 0) -> int:
    k = dist.isf(level)
    k = start if not math.isfinite(k) else max(start, int(k) - 1)
    while dist.sf(k) >= level:
        k += 1
    while k > start and dist.sf(k - 1) < level:
        k -= 1
    return k


def poisson_pmf(lam: float, tol: float = DEFAULT_TOL) -> PmfVector:
    """Poisson(lam) truncated once the tail drops below ``tol``."""
    _check_tol(tol)
    if not (math.isfinite(lam) and lam >= 0):
        raise InvalidParameter(f"Poisson mean must be finite and >= 0, got {lam}")
    if lam == 0:
        return PmfVector.point_mass(0, tol)
    dist = stats.poisson(lam)
    K = _smallest_k_with_sf_below(dist, tol)
    return PmfVector(0, dist.pmf(np.arange(K + 1)), float(dist.sf(K)), tol)


def nb_pmf(params: NegBinParams, tol: float = DEFAULT_TOL) -> PmfVector:
    """NB(r, p) by the recurrence ``(k+1) P(k+1) = p (r+k) P(k)``."""
    _check_tol(tol)
    dist = params.scipy()
    K = _smallest_k_with_sf_below(dist, tol)
    k = np.arange(K)
    ratios = params.p * (params.r + k) / (k + 1.0)
    probs = (1.0 - params.p) ** params.r * np.concatenate(([1.0], np.cumprod(ratios)))
    return PmfVector(0, probs, float(dist.sf(K)), tol)


def _as_rates(params) -> np.ndarray:
    if isinstance(params, CompoundPoissonParams):
        return np.asarray(params.lambdas)
    lam = np.asarray(list(params), dtype=np.float64)
    if lam.size and (not np.all(np.isfinite(lam)) or np.any(lam < 0)):
        raise InvalidParameter("rates must be finite and non-negative")
    return lam


def _cp_log_tail_bound(lam: np.ndarray, k: int) -> float:
    """Chernoff bound on ``log(e^{lambda} P(N >= k))`` for N ~ CP(lam).

    Returns ``+inf`` when ``k`` does not exceed the mean (no useful bound).
    """
    j = np.arange(1, lam.size + 1)
    mean = float(np.dot(j, lam))
    if k <= mean:
        return math.inf

    def slope(t):
        with np.errstate(over="ignore"):
            return float(np.dot(j * lam, np.exp(t * j))) - k

    hi = 1.0
    while slope(hi) < 0:
        hi *= 2.0
    t = optimize.brentq(slope, 0.0, hi, xtol=1e-14)
    return float(np.dot(lam, np.exp(t * j))) - t * k


def _panjer_step(w: list[float], jl: np.ndarray) -> float:
    n = len(w)
    top = min(n, jl.size)
    acc = 0.0
    for j in range(1, top + 1):
        acc += jl[j - 1] * w[n - j]
    return acc / n


def cp_pmf(params, tol: float = DEFAULT_TOL) -> PmfVector:
    """Compound Poisson law by the Panjer recursion.

    ``params`` may be a :class:`CompoundPoissonParams` or a plain sequence of
    cluster rates; an empty or all-zero sequence gives the point mass at 0.
    """
    _check_tol(tol)
    lam = _as_rates(params)
    total = float(lam.sum()) if lam.size else 0.0
    if total == 0.0:
        return PmfVector.point_mass(0, tol)
    if total > MAX_TOTAL_RATE:
        raise OutOfRange(f"total rate {total} exceeds {MAX_TOTAL_RATE}")
    jl = np.arange(1, lam.size + 1) * lam
    w = [1.0]
    cum = math.exp(-total)
    while True:
        tail = max(0.0, 1.0 - cum)
        log_bound = _cp_log_tail_bound(lam, len(w)) - total
        if log_bound < 0:
            tail = min(tail, math.exp(log_bound))
        if tail < tol:
            break
        w.append(_panjer_step(w, jl))
        cum += w[-1] * math.exp(-total)
    probs = np.array(w) * math.exp(-total)
    return PmfVector(0, probs, tail, tol)


def conditional_cp_pmf(params, m: int, tol: float = DEFAULT_TOL, upto: int | None = None) -> PmfVector:
    """Law of ``N | N >= m`` for ``N ~ CP(params)`` with *relative* tail control.

    The Panjer recursion is run on the scale ``e^{lambda} P(N = k)`` so that
    conditioning on a very rare event keeps full relative precision; the
    discarded tail is bounded by a Chernoff estimate.  ``upto`` forces
    storage through at least that support point.
    """
    _check_tol(tol)
    if m < 0:
        raise InvalidParameter(f"m must be >= 0, got {m}")
    lam = _as_rates(params)
    total = float(lam.sum()) if lam.size else 0.0
    if total == 0.0:
        if m == 0:
            return PmfVector.point_mass(0, tol)
        raise ConditioningOnNullEvent(f"P(N >= {m}) = 0 for the null compound Poisson law")
    if total > MAX_TOTAL_RATE:
        raise OutOfRange(f"total rate {total} exceeds {MAX_TOTAL_RATE}")
    jl = np.arange(1, lam.size + 1) * lam
    last = max(m, upto or 0)
    w = [1.0]
    while len(w) <= last:
        w.append(_panjer_step(w, jl))
    while True:
        S = math.fsum(w[m:])
        if S > 0:
            log_b = _cp_log_tail_bound(lam, len(w))
            if math.isfinite(log_b):
                B = math.exp(log_b)
                if B < tol * S:
                    break
        w.append(_panjer_step(w, jl))
    probs = np.array(w[m:]) / (S + B)
    return PmfVector(m, probs, B / (S + B), tol)


def restarted_cp_pmf(params, m: int, tol: float = DEFAULT_TOL, upto: int | None = None) -> PmfVector:
    """Panjer recursion restarted at ``m``: the law ``mu`` on ``{m, m+1, ...}`` with

        k mu_k = sum_{j <= k - m} j lambda_j mu_{k-j},   k > m.

    This is the law left invariant by the conditional compound Poisson Stein
    operator ``sum_j j lambda_j g(i+j) - i g(i) 1{i > m}``.  It equals
    ``CP(lambda)`` conditioned on ``>= m`` when ``m = 0`` or all clusters have
    size 1, and differs from it otherwise.
    """
    _check_tol(tol)
    if m < 0:
        raise InvalidParameter(f"m must be >= 0, got {m}")
    lam = _as_rates(params)
    total = float(lam.sum()) if lam.size else 0.0
    if total == 0.0:
        return PmfVector.point_mass(m, tol)
    if total > MAX_TOTAL_RATE:
        raise OutOfRange(f"total rate {total} exceeds {MAX_TOTAL_RATE}")
    J = lam.size
    jl = np.arange(1, J + 1) * lam
    mu = float(jl.sum())
    w = [1.0]  # w[t] is the weight at m + t
    last = max(upto or 0, m)
    while True:
        k = m + len(w) - 1
        q = mu / (k + 1)
        if k >= last and q < 1:
            window = max(w[-J:])
            S = math.fsum(w)
            B = J * window * q / (1.0 - q)
            if B < tol * S:
                break
        n = len(w)
        acc = 0.0
        for j in range(1, min(J, n) + 1):
            acc += jl[j - 1] * w[n - j]
        w.append(acc / (k + 1))
    return PmfVector(m, np.array(w) / (S + B), B / (S + B), tol)


def _conditional_scipy(dist, m: int, tol: float, upto: int | None) -> PmfVector:
    S = float(dist.sf(m - 1)) if m > 0 else 1.0
    if S <= 0:
        raise ConditioningOnNullEvent(f"P(X >= {m}) underflows to 0")
    K = max(_smallest_k_with_sf_below(dist, tol * S, start=m), upto or 0)
    probs = dist.pmf(np.arange(m, K + 1)) / S
    return PmfVector(m, probs, float(dist.sf(K)) / S, tol)


def conditional_poisson_pmf(
    lam: float, m: int, tol: float = DEFAULT_TOL, upto: int | None = None
) -> PmfVector:
    """``Pn(lam)`` conditioned on ``>= m``, tail relative to ``P(P >= m)``."""
    _check_tol(tol)
    if not (math.isfinite(lam) and lam > 0):
        raise InvalidParameter(f"Poisson mean must be > 0, got {lam}")
    return _conditional_scipy(stats.poisson(lam), m, tol, upto)


def conditional_nb_pmf(
    params: NegBinParams, m: int, tol: float = DEFAULT_TOL, upto: int | None = None
) -> PmfVector:
    _check_tol(tol)
    return _conditional_scipy(params.scipy(), m, tol, upto)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def conditional_truncate(pmf: PmfVector, m: int) -> PmfVector:
    """Restrict ``pmf`` to ``{m, m+1, ...}`` and renormalise."""
    if m < 0:
        raise InvalidParameter(f"m must be >= 0, got {m}")
    mass = pmf.mass_at_least(m)
    if mass <= 10 * pmf.tol:
        raise ConditioningOnNullEvent(
            f"P(X >= {m}) = {mass:.3g} is not above 10*tol = {10 * pmf.tol:.3g}"
        )
    start = max(pmf.offset, m)
    if start >= pmf.end:
        raise ConditioningOnNullEvent(f"all mass at or above {m} lies in the discarded tail")
    probs = pmf.probs[start - pmf.offset:] / mass
    return PmfVector(start, probs, pmf.tail_mass / mass, pmf.tol)


def convolve(a: PmfVector, b: PmfVector) -> PmfVector:
    """Exact convolution; tail masses are added (a conservative bound)."""
    probs = np.convolve(a.probs, b.probs)
    return PmfVector(a.offset + b.offset, probs, a.tail_mass + b.tail_mass, max(a.tol, b.tol))


def convolve_power(pi: ClusterDistribution | PmfVector, j: int) -> PmfVector:
    """``j``-fold self-convolution by repeated squaring; ``j = 0`` gives the point mass at 0."""
    if j < 0:
        raise InvalidParameter(f"convolution power must be >= 0, got {j}")
    base = pi.as_pmf() if isinstance(pi, ClusterDistribution) else pi
    result = PmfVector.point_mass(0, base.tol)
    while j:
        if j & 1:
            result = convolve(result, base)
        j >>= 1
        if j:
            base = convolve(base, base)
    return result


def brute_force_cp_pmf(lambdas: Sequence[float], tol: float = 1e-16) -> PmfVector:
    """Law of ``sum_j j K_j`` with independent ``K_j ~ Pn(lambda_j)``.

    Direct convolution of scaled Poisson laws; slow but independent of the
    Panjer recursion, which is what it exists to check.
    """
    out = PmfVector.point_mass(0, max(tol, 1e-15))
    for j, lam in enumerate(lambdas, start=1):
        if lam == 0:
            continue
        base = poisson_pmf(lam, tol)
        spread = np.zeros((base.probs.size - 1) * j + 1)
        spread[::j] = base.probs
        out = convolve(out, PmfVector(0, spread, base.tail_mass, out.tol))
    return out
