"""Limit fragility distributions under a compound Poisson exceedance limit.

When the exceedance count converges to a compound Poisson law with rate
``theta * tau`` and cluster law ``pi``, the order-``m`` fragility
distribution converges (``n -> inf``) to ``pi^{*I}`` restricted to
``{m, m+1, ...}`` and renormalised, with ``I`` the fewest clusters that can
reach ``m`` exceedances.  Only the product ``theta * tau`` ever enters, so
the API takes a single ``rate``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dist_core import (
    DEFAULT_TOL,
    ClusterDistribution,
    CompoundPoissonParams,
    PmfVector,
    conditional_cp_pmf,
    convolve,
)
from .errors import InvalidParameter
from .metrics import tv_distance


@dataclass(frozen=True)
class FragilityResult:
    m: int
    I_m: int
    law: PmfVector

    def to_dict(self) -> dict:
        return {"m": self.m, "I_m": self.I_m, "law": self.law.to_dict()}


def _check_m(m: int) -> None:
    if int(m) != m or m < 1:
        raise InvalidParameter(f"order m must be an integer >= 1, got {m}")


def _power_reaching(pi: ClusterDistribution, m: int) -> tuple[int, PmfVector]:
    base = pi.as_pmf()
    i = max(1, math.ceil(m / pi.J))
    power = base
    for _ in range(i - 1):
        power = convolve(power, base)
    # positivity is structural: exact zeros mark unreachable totals
    while power.mass_at_least(m) <= 0.0:
        i += 1
        power = convolve(power, base)
    return i, power


def index_I_m(pi: ClusterDistribution, m: int) -> int:
    """Least ``i >= 1`` with ``pi^{*i}({m, m+1, ...}) > 0``."""
    _check_m(m)
    return _power_reaching(pi, m)[0]


def fd_limit(pi: ClusterDistribution, m: int) -> FragilityResult:
    _check_m(m)
    if m == 1:
        # every cluster has size >= 1, so the limit is pi itself, untouched
        return FragilityResult(1, 1, pi.as_pmf())
    i, power = _power_reaching(pi, m)
    start = max(m, power.offset)
    kept = power.probs[start - power.offset:]
    law = PmfVector(start, kept / kept.sum(), 0.0)
    return FragilityResult(m, i, law)


def conditional_cp_law(rate: float, pi: ClusterDistribution, m: int, tol: float = DEFAULT_TOL) -> PmfVector:
    """Law of ``N | N >= m`` for ``N ~ CP(rate * pi)``."""
    _check_m(m)
    params = CompoundPoissonParams.from_rate(rate, pi)
    return conditional_cp_pmf(params, m, tol)


def fd_convergence_table(
    pi: ClusterDistribution,
    m: int,
    rates: Sequence[float],
    tol: float = DEFAULT_TOL,
) -> list[tuple[float, float]]:
    """TV distance between the finite-rate conditional law and the limit, per rate."""
    rates = [float(r) for r in rates]
    if not rates or any(r <= 0 for r in rates):
        raise InvalidParameter("rates must be positive")
    if any(b >= a for a, b in zip(rates, rates[1:])):
        raise InvalidParameter("rates must be strictly decreasing")
    limit = fd_limit(pi, m).law
    return [(r, tv_distance(conditional_cp_law(r, pi, m, tol), limit).tv) for r in rates]


def fragility_index(result: FragilityResult) -> float:
    """Mean of a fragility law: expected exceedances given at least ``m``."""
    return result.law.mean()


def table_is_decreasing(table: list[tuple[float, float]], slack: float = 0.0) -> bool:
    tvs = np.array([tv for _, tv in table])
    return bool(np.all(np.diff(tvs) <= slack))
