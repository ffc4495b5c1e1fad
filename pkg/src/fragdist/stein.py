"""Conditional Stein equations and Stein factors.

For a target law ``Q`` on ``{m, m+1, ...}`` the conditional Stein operator is

    (B g)(i) = sum_j c_j(i) g(i + j) - i g(i) 1{i > m},

with ``c_1(i) = lam`` (conditional Poisson), ``c_1(i) = p (r + i)``
(conditional negative binomial) or ``c_j(i) = j lam_j`` (conditional
compound Poisson).  The equation ``B g = f - Q f`` leaves ``g(m)`` free; we
fix ``g(m) = 0``.

For Poisson and negative binomial ``Q`` is the conditioned law.  For compound
Poisson with clusters of size 2 or more and ``m >= 1`` the operator does not
annihilate the conditioned law (mass that would arrive from below ``m`` is
missing), so the equation is centred on the law the operator does leave
invariant; see :func:`fragdist.dist_core.restarted_cp_pmf` and
:func:`cp_target_gap`.

Stein factors are suprema over indicator test functions ``f = 1_A``:

    G1 = sup_A sup_{i >= m} |g_A(i + 1)|,
    G2 = sup_A sup_{i >= m} |g_A(i + 1) - g_A(i)|.

Because ``g_A`` is linear in ``A``, both suprema reduce to sums of positive
and negative parts over single-point sets, so no subset enumeration occurs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import linalg, stats

from .dist_core import (
    CompoundPoissonParams,
    NegBinParams,
    PmfVector,
    conditional_cp_pmf,
    conditional_nb_pmf,
    conditional_poisson_pmf,
    restarted_cp_pmf,
)
from .errors import (
    InvalidParameter,
    PreconditionViolated,
    SolverFailure,
    TruncationTooSmall,
)

TRUNCATION_TAIL = 1e-12
# storage precision for the target law inside the solvers
LAW_TOL = 1e-15
MONOTONE_SLACK = 1e-9

FAMILY_ALIASES = {
    "poisson": "cond_poisson",
    "cond_poisson": "cond_poisson",
    "negbin": "cond_negbin",
    "nb": "cond_negbin",
    "cond_negbin": "cond_negbin",
    "cp": "cond_compound_poisson",
    "compound_poisson": "cond_compound_poisson",
    "cond_compound_poisson": "cond_compound_poisson",
}


def canonical_family(name: str) -> str:
    try:
        return FAMILY_ALIASES[name]
    except KeyError:
        raise InvalidParameter(f"unknown family {name!r}") from None


@dataclass(frozen=True)
class SteinSolution:
    """Tabulated ``g`` on ``m..M`` with ``g[k] = g(m + k)``."""

    family: str
    m: int
    target: frozenset
    g: np.ndarray
    M: int
    residual: float
    weights: np.ndarray
    J: int = 1

    def __call__(self, i: int) -> float:
        if not self.m <= i <= self.M:
            raise InvalidParameter(f"g is tabulated on [{self.m}, {self.M}], not at {i}")
        return float(self.g[i - self.m])

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.m, self.M + 1)

    def delta(self) -> np.ndarray:
        """``g(i+1) - g(i)`` for ``i = m..M-1``."""
        return np.diff(self.g)

    def identity_expectation(self, operator: "_Operator") -> float:
        """``E[(B g)(W)]`` under the target law, over ``[m, M - J]``."""
        stop = self.M - self.J
        Bg = operator.apply(self.g, self.m, self.M)[: stop - self.m + 1]
        return float(np.dot(self.weights[: stop - self.m + 1], Bg))


@dataclass(frozen=True)
class SteinFactors:
    G1: float
    G2: float
    m: int
    method: str

    def to_dict(self) -> dict:
        return {"G1": self.G1, "G2": self.G2, "m": self.m, "method": self.method}


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

class _Operator:
    """Coefficients of one conditional Stein operator and its target law."""

    family: str
    J: int

    def coeffs(self, i: np.ndarray) -> np.ndarray:
        """Array of shape ``(len(i), J)`` holding ``c_j(i)``."""
        raise NotImplementedError

    def law(self, m: int, upto: int) -> PmfVector:
        raise NotImplementedError

    @property
    def drift(self) -> float:
        """Growth rate bounding ``sum_j c_j(i) / i`` for large ``i``."""
        raise NotImplementedError

    def apply(self, g: np.ndarray, m: int, M: int) -> np.ndarray:
        """``(B g)(i)`` for ``i = m..M`` taking ``g = 0`` beyond ``M``."""
        i = np.arange(m, M + 1)
        padded = np.concatenate([g, np.zeros(self.J)])
        c = self.coeffs(i)
        out = -i * g * (i > m)
        for j in range(1, self.J + 1):
            out = out + c[:, j - 1] * padded[j: j + g.size]
        return out


class _PoissonOp(_Operator):
    family = "cond_poisson"
    J = 1

    def __init__(self, lam: float):
        if not (math.isfinite(lam) and lam > 0):
            raise InvalidParameter(f"Poisson mean must be > 0, got {lam}")
        self.lam = float(lam)

    def coeffs(self, i):
        return np.full((np.size(i), 1), self.lam)

    def law(self, m, upto):
        return conditional_poisson_pmf(self.lam, m, LAW_TOL, upto)

    @property
    def drift(self):
        return self.lam


class _NegBinOp(_Operator):
    family = "cond_negbin"
    J = 1

    def __init__(self, params: NegBinParams):
        self.params = params

    def coeffs(self, i):
        return (self.params.p * (self.params.r + np.asarray(i, dtype=float)))[:, None]

    def law(self, m, upto):
        return conditional_nb_pmf(self.params, m, LAW_TOL, upto)

    @property
    def drift(self):
        return self.params.p


class _CompoundPoissonOp(_Operator):
    """Compound Poisson operator.

    ``target="invariant"`` (default) centres the equation on the law the
    operator actually leaves invariant (:func:`restarted_cp_pmf`), which is
    the only choice with a bounded solution.  ``target="conditional"`` uses
    ``CP(lambda)`` conditioned on ``>= m``; for clusters of size >= 2 and
    ``m >= 1`` that equation is inconsistent and the row ``i = m`` residual
    shows by how much.
    """

    family = "cond_compound_poisson"

    def __init__(self, params: CompoundPoissonParams, target: str = "invariant"):
        if target not in ("invariant", "conditional"):
            raise InvalidParameter(f"unknown compound Poisson target {target!r}")
        self.params = params
        self.target = target
        self.J = params.J
        self.jl = np.arange(1, self.J + 1) * params.lambdas

    def coeffs(self, i):
        return np.broadcast_to(self.jl, (np.size(i), self.J))

    def law(self, m, upto):
        if self.target == "conditional":
            return conditional_cp_pmf(self.params, m, LAW_TOL, upto)
        return restarted_cp_pmf(self.params, m, LAW_TOL, upto)

    @property
    def drift(self):
        return float(self.jl.sum())


def make_operator(family: str, params) -> _Operator:
    family = canonical_family(family)
    if family == "cond_poisson":
        return _PoissonOp(float(params))
    if family == "cond_negbin":
        if not isinstance(params, NegBinParams):
            params = NegBinParams(*params)
        return _NegBinOp(params)
    if not isinstance(params, CompoundPoissonParams):
        params = CompoundPoissonParams(params)
    return _CompoundPoissonOp(params)


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------

def default_truncation(op: _Operator, m: int) -> int:
    """Smallest ``M`` with conditional tail beyond ``M - J`` below 1e-12."""
    law = op.law(m, m)
    tail = law.tail_mass + np.concatenate([np.cumsum(law.probs[::-1])[::-1][1:], [0.0]])
    K = law.offset + int(np.argmax(tail < TRUNCATION_TAIL))
    return K + op.J + 1


def _checked_law(op: _Operator, m: int, M: int, upto: int) -> PmfVector:
    if M < m + op.J + 1:
        raise TruncationTooSmall(f"M = {M} leaves no interior points above m = {m}")
    law = op.law(m, upto)
    beyond = law.mass_at_least(M + 1)
    if beyond >= TRUNCATION_TAIL:
        raise TruncationTooSmall(
            f"conditional tail beyond M = {M} is {beyond:.3g}, not below {TRUNCATION_TAIL:g}"
        )
    return law


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def _birth_death_columns(op: _Operator, law: PmfVector, m: int, M: int, sets: list) -> np.ndarray:
    """``g_A`` on ``m..M`` for each ``A`` in ``sets`` (birth-death case).

    Uses the stationary-measure representation of the unique solution with
    ``g(m) = 0``:

        a(i) pi_i g(i+1) = pi(A, <= i) P(W > i) - pi(A, > i) P(W <= i),

    which is the forward recursion solved in closed form but free of its
    cancellation.  ``sets`` entries are sorted int arrays, or ``None`` for
    the aggregated set ``{M+1, M+2, ...}``.
    """
    i = np.arange(m, M)
    pi = law.dense(m, M + 1)
    right_tail = law.mass_at_least(M + 1)
    # P(W <= i) and P(W > i) for i = m..M-1, both summed without cancellation
    left = np.cumsum(pi)[:-1]
    right = np.cumsum(pi[::-1])[::-1][1:] + right_tail
    denom = op.coeffs(i)[:, 0] * pi[:-1]
    G = np.zeros((M - m + 1, len(sets)))
    for col, A in enumerate(sets):
        if A is None:
            below = np.zeros_like(left)
            above = np.full_like(left, right_tail)
        else:
            wA = np.array([law.prob(int(k)) for k in A])
            split = np.searchsorted(A, i, side="right")
            # both partial sums accumulated directly; a difference would cancel
            below = np.concatenate([[0.0], np.cumsum(wA)])[split]
            above = np.concatenate([np.cumsum(wA[::-1])[::-1], [0.0]])[split]
        G[1:, col] = (below * right - above * left) / denom
    return G


def _single_point_sets(m: int, M: int) -> list:
    return [np.array([k]) for k in range(m, M + 1)] + [None]


def _cp_padding(op: _Operator, M: int) -> int:
    # grow the solve range until back-substitution damps the closure error
    damp, i = 1.0, M
    while damp > 1e-20 and i < M + 10_000:
        i += 1
        damp *= min(1.0, op.drift / i)
    return i - M + op.J


def _triangular_columns(op: _Operator, law: PmfVector, m: int, M: int, sets: list) -> np.ndarray:
    """``g_A`` on ``m..M`` by back-substitution over rows ``i > m``.

    Rows ``i = m+1..E`` of ``B g = h`` form an upper-triangular system with
    diagonal ``-i``; ``g`` is closed by zero beyond ``E = M + padding``.  The
    row ``i = m`` is not used and serves as a consistency check.
    """
    E = M + _cp_padding(op, M)
    n = E - m
    rows = np.arange(m + 1, E + 1)
    U = np.zeros((n, n))
    U[np.arange(n), np.arange(n)] = -rows
    c = op.coeffs(rows)
    for j in range(1, op.J + 1):
        U[np.arange(n - j), np.arange(j, n)] = c[: n - j, j - 1]
    H = np.empty((n, len(sets)))
    for col, A in enumerate(sets):
        if A is None:
            ef = law.mass_at_least(M + 1)
            H[:, col] = (rows > M).astype(float) - ef
        else:
            ef = sum(law.prob(int(k)) for k in A)
            H[:, col] = np.isin(rows, A).astype(float) - ef
    try:
        sol = linalg.solve_triangular(U, H, lower=False, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SolverFailure(f"triangular Stein system failed: {exc}") from None
    G = np.zeros((M - m + 1, len(sets)))
    G[1:] = sol[: M - m]
    return G


def _columns(op: _Operator, law: PmfVector, m: int, M: int, sets: list) -> np.ndarray:
    if op.J == 1 and not isinstance(op, _CompoundPoissonOp):
        return _birth_death_columns(op, law, m, M, sets)
    return _triangular_columns(op, law, m, M, sets)


def _indicator_rhs(law: PmfVector, A: np.ndarray, m: int, M: int) -> np.ndarray:
    i = np.arange(m, M + 1)
    ef = sum(law.prob(int(k)) for k in A)
    return np.isin(i, A).astype(float) - ef


def _solve(op: _Operator, m: int, A: Iterable[int], M: int | None, force_triangular: bool = False) -> SteinSolution:
    if int(m) != m or m < 0:
        raise InvalidParameter(f"m must be an integer >= 0, got {m}")
    A = np.array(sorted(set(int(k) for k in A)), dtype=int)
    if A.size and A[0] < m:
        raise InvalidParameter(f"test set must lie in [{m}, inf)")
    if M is None:
        M = default_truncation(op, m)
    upto = max(M + 1, int(A[-1]) if A.size else 0)
    law = _checked_law(op, m, M, upto)
    if force_triangular:
        g = _triangular_columns(op, law, m, M, [A])[:, 0]
    else:
        g = _columns(op, law, m, M, [A])[:, 0]
    stop = M - op.J
    resid = op.apply(g, m, M)[: stop - m + 1] - _indicator_rhs(law, A, m, M)[: stop - m + 1]
    residual = float(np.max(np.abs(resid)))
    if not math.isfinite(residual):
        raise SolverFailure("non-finite Stein solution")
    return SteinSolution(
        family=op.family,
        m=int(m),
        target=frozenset(int(k) for k in A),
        g=g,
        M=int(M),
        residual=residual,
        weights=law.dense(m, M + 1),
        J=op.J,
    )


def solve_stein_poisson(lam: float, m: int, A: Iterable[int], M: int | None = None) -> SteinSolution:
    """Solve ``lam g(i+1) - i g(i) 1{i>m} = 1_A(i) - Q(A)``, Q the Poisson law conditioned on ``>= m``."""
    return _solve(_PoissonOp(lam), m, A, M)


def solve_stein_nb(params: NegBinParams, m: int, A: Iterable[int], M: int | None = None) -> SteinSolution:
    """Solve ``p(r+i) g(i+1) - i g(i) 1{i>m} = 1_A(i) - Q(A)``, Q the NB law conditioned on ``>= m``."""
    return _solve(_NegBinOp(params), m, A, M)


def solve_stein_cp(
    params: CompoundPoissonParams,
    m: int,
    A: Iterable[int],
    M: int | None = None,
    target: str = "invariant",
) -> SteinSolution:
    """Solve the conditional compound Poisson Stein equation as a linear system.

    See :class:`_CompoundPoissonOp` for the meaning of ``target``.
    """
    if not isinstance(params, CompoundPoissonParams):
        params = CompoundPoissonParams(params)
    return _solve(_CompoundPoissonOp(params, target), m, A, M, force_triangular=True)


def cp_target_gap(params, m: int) -> float:
    """TV distance between ``CP^(m)`` and the operator-invariant law.

    Zero (to rounding) when ``m = 0`` or ``J = 1``.
    """
    from .metrics import tv_distance

    if not isinstance(params, CompoundPoissonParams):
        params = CompoundPoissonParams(params)
    return tv_distance(
        conditional_cp_pmf(params, m, LAW_TOL), restarted_cp_pmf(params, m, LAW_TOL)
    ).tv


# ---------------------------------------------------------------------------
# factors
# ---------------------------------------------------------------------------

def _sup_over_sets(G: np.ndarray) -> np.ndarray:
    pos = np.clip(G, 0.0, None).sum(axis=1)
    neg = np.clip(-G, 0.0, None).sum(axis=1)
    return np.maximum(pos, neg)


def factor_profiles(family: str, params, m: int, M: int | None = None):
    """Per-point suprema ``(i, sup_A |g_A(i+1)|, sup_A |Delta g_A(i)|)``, ``i = m..M-J``."""
    op = make_operator(family, params)
    if M is None:
        M = default_truncation(op, m)
    law = _checked_law(op, m, M, M + 1)
    G = _columns(op, law, m, M, _single_point_sets(m, M))
    stop = M - op.J
    i = np.arange(m, stop + 1)
    sup_g = _sup_over_sets(G)[1: stop - m + 2]
    sup_dg = _sup_over_sets(np.diff(G, axis=0))[: stop - m + 1]
    return i, sup_g, sup_dg


def stein_factors_numeric(family: str, params, m: int, M: int | None = None) -> SteinFactors:
    _, sup_g, sup_dg = factor_profiles(family, params, m, M)
    return SteinFactors(float(sup_g.max()), float(sup_dg.max()), int(m), "numeric")


def G_m2_nb_exact(params, m: int, m_alt: int | None = None) -> float:
    """Exact increment factor ``P(Z > m) / (p (r + m) P(Z >= m))``, ``Z ~ NB(r, p)``.

    Accepts ``(params, m)`` or ``(r, p, m)``.
    """
    if m_alt is not None:
        params, m = NegBinParams(float(params), float(m)), m_alt
    elif not isinstance(params, NegBinParams):
        params = NegBinParams(*params)
    dist = params.scipy()
    ge = float(dist.sf(m - 1)) if m > 0 else 1.0
    return float(dist.sf(m)) / (params.p * (params.r + m) * ge)


def G_m2_poisson_exact(lam: float, m: int) -> float:
    if not lam > 0:
        raise InvalidParameter(f"Poisson mean must be > 0, got {lam}")
    dist = stats.poisson(lam)
    ge = float(dist.sf(m - 1)) if m > 0 else 1.0
    return float(dist.sf(m)) / (lam * ge)


def G_m1_poisson_bound(lam: float) -> float:
    if not lam > 0:
        raise InvalidParameter(f"Poisson mean must be > 0, got {lam}")
    return min(1.0, math.sqrt(2.0 / (lam * math.e)))


def G_m1_nb_bound(params: NegBinParams) -> float:
    r, p = params.r, params.p
    return min(1.0 / (1.0 - p), 1.75 / math.sqrt(r * p * (1.0 - p)))


def check_decreasing_j_lambda(lambdas) -> None:
    jl = np.arange(1, len(lambdas) + 1) * np.asarray(lambdas, dtype=float)
    if np.any(np.diff(jl) > 0):
        raise PreconditionViolated(f"j * lambda_j is not non-increasing: {jl.tolist()}")


def G_m_cp_bounds(lambda1: float, lambda2: float, lambdas=None) -> tuple[float, float]:
    """Stein factor bounds valid for every ``m`` when ``j lambda_j`` decreases."""
    check_decreasing_j_lambda(lambdas if lambdas is not None else [lambda1, lambda2])
    d = lambda1 - 2.0 * lambda2
    if d <= 1.0:
        g1 = 1.0
    else:
        s = 1.0 / math.sqrt(d)
        g1 = s * (2.0 - s)
    if d <= 0:
        g2 = 1.0
    else:
        log_plus = max(0.0, math.log(2.0 * d))
        g2 = min(1.0, (1.0 / d) * (1.0 / (4.0 * d) + log_plus))
    return g1, g2


def transfer_conditional_bound(eps1: float, eps2: float, prob_W_ge_m: float, G1: float, G2: float) -> float:
    """Conditional TV bound from unconditional Stein estimates ``eps1, eps2``."""
    if not 0.0 < prob_W_ge_m <= 1.0:
        raise InvalidParameter(f"P(W >= m) must lie in (0, 1], got {prob_W_ge_m}")
    if min(eps1, eps2, G1, G2) < 0:
        raise InvalidParameter("error terms and factors must be non-negative")
    return (eps1 * G1 + eps2 * G2) / prob_W_ge_m


def stein_factors(family: str, params, m: int, numeric: bool = False, M: int | None = None) -> SteinFactors:
    """Numeric factors, or closed forms.

    Closed forms: conditional Poisson and negative binomial give the exact
    ``G2`` with the ``G1`` upper bound (method ``closed_form``); compound
    Poisson gives the two upper bounds (method ``bound``).
    """
    family = canonical_family(family)
    if numeric:
        return stein_factors_numeric(family, params, m, M)
    op = make_operator(family, params)
    if family == "cond_poisson":
        return SteinFactors(G_m1_poisson_bound(op.lam), G_m2_poisson_exact(op.lam, m), m, "closed_form")
    if family == "cond_negbin":
        return SteinFactors(G_m1_nb_bound(op.params), G_m2_nb_exact(op.params, m), m, "closed_form")
    lam = op.params.lambdas
    g1, g2 = G_m_cp_bounds(lam[0], lam[1] if lam.size > 1 else 0.0, lam)
    return SteinFactors(g1, g2, m, "bound")


@dataclass(frozen=True)
class SweepResult:
    rows: list
    max_increase: float

    @property
    def monotone(self) -> bool:
        return self.max_increase <= MONOTONE_SLACK


def monotonicity_sweep(family: str, params, m_max: int, M: int | None = None) -> SweepResult:
    """Numeric factors for ``m = 0..m_max`` and the largest increase in ``m``."""
    rows = [stein_factors_numeric(family, params, m, M) for m in range(m_max + 1)]
    g1 = np.array([r.G1 for r in rows])
    g2 = np.array([r.G2 for r in rows])
    inc = max(float(np.max(np.diff(g1), initial=0.0)), float(np.max(np.diff(g2), initial=0.0)))
    return SweepResult(rows, inc)
