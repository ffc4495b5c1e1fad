"""Closed forms for a family of singular densities whose tail ratios oscillate.

The density ``g1`` equals 2 on ``[1 - 2^-k, 1 - 3 * 2^-(k+2)]`` for
``k = 0, 1, 2, ...`` and 0 elsewhere.  Block ``k`` is ``[1 - 2^-k, 1 - 2^-(k+1))``;
its first half carries mass ``2^-(k+1)``.  Along ``y = 1 - 2^-k`` the ratio
``(1 - G1(y)) / (1 - y)`` equals 1, along ``y = 1 - 3 * 2^-(k+1)`` it equals
2/3, so it has no limit as ``y -> 1``.  The remaining functions are exceedance
probabilities for two- and three-dimensional laws built from ``g1``; some
converge and some inherit the oscillation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .errors import DomainError, InvalidParameter, ResolutionError

MAX_DEPTH = 45
SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)


def _check_unit(y: float, name: str = "y", closed: bool = True) -> float:
    y = float(y)
    if not (0.0 <= y <= 1.0) or (not closed and y == 1.0):
        interval = "[0, 1]" if closed else "[0, 1)"
        raise DomainError(f"{name} must lie in {interval}, got {y}")
    return y


def block_index(y: float) -> int:
    """``k`` with ``1 - 2^-k <= y < 1 - 2^-(k+1)``; blocks are closed on the left."""
    u = 1.0 - _check_unit(y, closed=False)
    mant, exp = math.frexp(u)  # u = mant * 2^exp, mant in [0.5, 1)
    # u in (2^-(k+1), 2^-k] gives exp = -k, except u = 2^-k exactly (mant = 0.5)
    return -exp + (1 if mant == 0.5 else 0)


def survival_g1(y: float) -> float:
    """``1 - G1(y)``, computed in terms of ``u = 1 - y`` to keep precision near 1."""
    y = _check_unit(y)
    if y == 1.0:
        return 0.0
    u = 1.0 - y
    k = block_index(y)
    # later blocks hold 2^-(k+1); the rest of block k's active half adds 2 * overlap
    return 2.0 ** -(k + 1) + 2.0 * max(0.0, u - 3.0 * 2.0 ** -(k + 2))


def g1_density(y: float) -> float:
    y = _check_unit(y)
    if y == 1.0:
        return 0.0
    k = block_index(y)
    return 2.0 if 1.0 - y >= 3.0 * 2.0 ** -(k + 2) else 0.0


def G1_cdf(y: float) -> float:
    return 1.0 - survival_g1(y)


def ratio_r1(y: float) -> float:
    """``(1 - G1(y)) / (1 - y)``; always in ``[2/3, 1]``."""
    y = _check_unit(y, closed=False)
    return survival_g1(y) / (1.0 - y)


def G2_cdf(z: float) -> float:
    """``1 - (1 - z)(1 - G1(z))``."""
    z = _check_unit(z, "z")
    return 1.0 - (1.0 - z) * survival_g1(z)


def bivariate_ratio(s: float) -> float:
    """``P(N = 1) / P(N >= 2)`` for the two-dimensional law: ``sqrt2 (1 - s) / (1 - G1(s))``."""
    s = _check_unit(s, "s", closed=False)
    return SQRT2 * (1.0 - s) / survival_g1(s)


def trivariate_m1(s: float) -> float:
    """``P(N = 1 | N >= 1)`` for the three-dimensional law; tends to 1."""
    s = _check_unit(s, "s", closed=False)
    return 3.0 / (SQRT3 * survival_g1(s) + 3.0 * (1.0 - s) + 3.0)


def trivariate_m2(s: float) -> float:
    """``P(N = 2 | N >= 2)`` for the three-dimensional law; oscillates."""
    s = _check_unit(s, "s", closed=False)
    return SQRT3 / (ratio_r1(s) + SQRT3)


def sequence_a(k: int) -> float:
    """``1 - 2^-k``: left ends of the blocks."""
    return 1.0 - 2.0 ** -k


def sequence_b(k: int) -> float:
    """``1 - 3 * 2^-(k+1)``: right ends of the active halves (``k >= 1``)."""
    return 1.0 - 3.0 * 2.0 ** -(k + 1)


FUNCTIONS: dict[str, Callable[[float], float]] = {
    "r1": ratio_r1,
    "biv": bivariate_ratio,
    "tri1": trivariate_m1,
    "tri2": trivariate_m2,
}

_ALIASES = {
    "ratio_r1": "r1",
    "bivariate_ratio": "biv",
    "trivariate_m1": "tri1",
    "trivariate_m2": "tri2",
}


@dataclass(frozen=True)
class OscillationReport:
    function: str
    depth: int
    ks: list = field(repr=False)
    values_a: list = field(repr=False)
    values_b: list = field(repr=False)
    limit_a: float = 0.0
    limit_b: float = 0.0
    gap: float = 0.0
    settled: bool = True

    def to_dict(self) -> dict:
        return {
            "function": self.function,
            "depth": self.depth,
            "limit_a": self.limit_a,
            "limit_b": self.limit_b,
            "gap": self.gap,
            "settled": self.settled,
            "sequence_a": self.values_a,
            "sequence_b": self.values_b,
        }

    def rows(self) -> list[tuple[int, float, float]]:
        return list(zip(self.ks, self.values_a, self.values_b))


def oscillation_report(which: str, K: int = 40) -> OscillationReport:
    """Evaluate a function along both block sequences for ``k = 1..K``.

    The limit estimates are the values at ``k = K``; ``settled`` says whether
    the last five values of each sequence agree to 1e-9.
    """
    key = _ALIASES.get(which, which)
    if key not in FUNCTIONS:
        raise InvalidParameter(f"unknown function {which!r}; choose from {sorted(FUNCTIONS)}")
    if int(K) != K or K < 5:
        raise InvalidParameter(f"depth must be an integer >= 5, got {K}")
    if K > MAX_DEPTH:
        raise ResolutionError(f"depth {K} exceeds {MAX_DEPTH}: blocks are not resolved in double precision")
    fn = FUNCTIONS[key]
    ks = list(range(1, int(K) + 1))
    va = [fn(sequence_a(k)) for k in ks]
    vb = [fn(sequence_b(k)) for k in ks]
    settled = max(va[-5:]) - min(va[-5:]) <= 1e-9 and max(vb[-5:]) - min(vb[-5:]) <= 1e-9
    return OscillationReport(key, int(K), ks, va, vb, va[-1], vb[-1], abs(va[-1] - vb[-1]), settled)
