import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fragdist.dist_core import (
    ClusterDistribution,
    CompoundPoissonParams,
    NegBinParams,
    PmfVector,
    brute_force_cp_pmf,
    conditional_cp_pmf,
    conditional_nb_pmf,
    conditional_poisson_pmf,
    conditional_truncate,
    convolve,
    convolve_power,
    cp_pmf,
    nb_pmf,
    poisson_pmf,
    restarted_cp_pmf,
)
from fragdist.errors import ConditioningOnNullEvent, InvalidParameter, OutOfRange


def total(pmf: PmfVector) -> float:
    return float(pmf.probs.sum()) + pmf.tail_mass


# --- PmfVector ---------------------------------------------------------------

def test_pmf_rejects_bad_mass():
    with pytest.raises(InvalidParameter):
        PmfVector(0, [0.5, 0.4])
    with pytest.raises(InvalidParameter):
        PmfVector(0, [1.2, -0.2])
    with pytest.raises(InvalidParameter):
        PmfVector(-1, [1.0])


def test_pmf_probs_read_only():
    pmf = PmfVector(0, [0.5, 0.5])
    with pytest.raises(ValueError):
        pmf.probs[0] = 1.0


def test_pmf_json_roundtrip():
    pmf = PmfVector(3, [0.25, 0.5], 0.25)
    back = PmfVector.from_json(pmf.to_json())
    assert back.offset == 3 and back.tail_mass == 0.25
    assert np.array_equal(back.probs, pmf.probs)
    assert set(pmf.to_dict()) == {"offset", "probs", "tail_mass"}


def test_pmf_from_dict_defaults_tail():
    assert PmfVector.from_dict({"offset": 1, "probs": [1]}).tail_mass == 0.0
    with pytest.raises(InvalidParameter):
        PmfVector.from_dict({"probs": [1]})


# --- Poisson / NB ------------------------------------------------------------

def test_poisson_degenerate():
    pmf = poisson_pmf(0, 1e-12)
    assert pmf.offset == 0 and list(pmf.probs) == [1.0]


def test_poisson_values():
    assert poisson_pmf(1).probs[0] == pytest.approx(math.exp(-1), rel=1e-15)
    assert poisson_pmf(2).probs[2] == pytest.approx(2 * math.exp(-2), rel=1e-14)
    assert poisson_pmf(2).probs[2] == pytest.approx(0.2706705665, abs=1e-10)


@pytest.mark.parametrize("lam", [float("nan"), float("inf"), -1.0])
def test_poisson_invalid(lam):
    with pytest.raises(InvalidParameter):
        poisson_pmf(lam)


@pytest.mark.parametrize("tol", [1e-6, 1e-9, 1e-12])
def test_poisson_tail_below_tol(tol):
    pmf = poisson_pmf(7.5, tol)
    assert pmf.tail_mass <= tol
    assert abs(1 - total(pmf)) <= 10 * tol
    assert pmf.tail_mass == pytest.approx(stats.poisson.sf(pmf.end - 1, 7.5), rel=1e-9)


def test_nb_geometric():
    pmf = nb_pmf(NegBinParams(1, 0.5))
    k = np.arange(10)
    assert np.allclose(pmf.probs[:10], 0.5 ** (k + 1), rtol=1e-14, atol=0)


def test_nb_values():
    pmf = nb_pmf(NegBinParams(2, 0.3))
    assert pmf.probs[0] == pytest.approx(0.49, rel=1e-14)
    assert pmf.probs[1] == pytest.approx(0.294, rel=1e-14)


@pytest.mark.parametrize("r,p", [(0, 0.5), (-1, 0.5), (1, 0), (1, 1), (1, 1.5)])
def test_nb_invalid(r, p):
    with pytest.raises(InvalidParameter):
        NegBinParams(r, p)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 20), st.floats(0.01, 0.9))
def test_nb_balance_identity(r, p):
    pmf = nb_pmf(NegBinParams(r, p))
    k = np.arange(pmf.probs.size - 1)
    lhs = (k + 1) * pmf.probs[1:]
    rhs = p * (r + k) * pmf.probs[:-1]
    nz = rhs > 1e-300
    assert np.all(np.abs(lhs[nz] - rhs[nz]) <= 1e-12 * rhs[nz])
    assert pmf.tail_mass <= 1e-12


def test_nb_matches_gamma_formula():
    r, p = 3.7, 0.42
    pmf = nb_pmf(NegBinParams(r, p))
    k = np.arange(25)
    logf = (
        np.array([math.lgamma(r + x) - math.lgamma(r) - math.lgamma(x + 1) for x in k])
        + r * math.log(1 - p) + k * math.log(p)
    )
    assert np.allclose(pmf.probs[:25], np.exp(logf), rtol=1e-12, atol=0)


# --- compound Poisson ----------------------------------------------------------

def test_cp_unit_clusters_is_poisson():
    for lam in (0.1, 1, 5, 20):
        a, b = cp_pmf([lam]), poisson_pmf(lam)
        hi = max(a.end, b.end)
        assert np.abs(a.dense(0, hi) - b.dense(0, hi)).max() <= 1e-12


def test_cp_hand_values():
    pmf = cp_pmf([0.5, 0.25])
    e = math.exp(-0.75)
    assert pmf.probs[:3] == pytest.approx([e, 0.5 * e, 0.375 * e], rel=1e-14)


@pytest.mark.parametrize("lam", [[], [0.0], [0.0, 0.0, 0.0]])
def test_cp_empty_is_point_mass(lam):
    pmf = cp_pmf(lam)
    assert pmf.offset == 0 and list(pmf.probs) == [1.0]


def test_cp_underflow_guard():
    with pytest.raises(OutOfRange):
        cp_pmf([400.0, 101.0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 2.5), min_size=1, max_size=4).filter(lambda v: 0 < sum(v) <= 5))
def test_cp_matches_brute_force(lam):
    a, b = cp_pmf(lam, 1e-15), brute_force_cp_pmf(lam)
    hi = max(a.end, b.end)
    assert np.abs(a.dense(0, hi) - b.dense(0, hi)).max() <= 1e-10


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 30), min_size=1, max_size=5).filter(lambda v: sum(v) > 0))
def test_cp_total_mass(lam):
    tol = 1e-12
    pmf = cp_pmf(lam, tol)
    assert pmf.tail_mass <= tol
    assert abs(1 - total(pmf)) <= 10 * tol


def test_cp_mean():
    lam = [0.7, 0.3, 0.2]
    pmf = cp_pmf(lam, 1e-15)
    assert pmf.mean() == pytest.approx(CompoundPoissonParams(lam).mean, rel=1e-12)


def test_cluster_distribution_checks():
    with pytest.raises(InvalidParameter):
        ClusterDistribution([0.5, 0.4])
    with pytest.raises(InvalidParameter):
        ClusterDistribution([])
    with pytest.raises(InvalidParameter):
        CompoundPoissonParams([0.0, 0.0])
    assert ClusterDistribution.uniform([1, 2]).pi.tolist() == [0.5, 0.5]
    assert ClusterDistribution.point_mass(3).pi.tolist() == [0, 0, 1]


# --- conditioning ---------------------------------------------------------------

def test_conditional_truncate_full_space():
    pmf = poisson_pmf(1)
    out = conditional_truncate(pmf, 0)
    assert out.offset == 0 and np.allclose(out.probs, pmf.probs, rtol=1e-15)


def test_conditional_truncate_value():
    out = conditional_truncate(poisson_pmf(1), 1)
    assert out.offset == 1
    assert out.probs[0] == pytest.approx(math.exp(-1) / (1 - math.exp(-1)), rel=1e-13)
    assert out.probs[0] == pytest.approx(0.5819767069, abs=1e-10)


def test_conditional_truncate_null_event():
    with pytest.raises(ConditioningOnNullEvent):
        conditional_truncate(PmfVector.point_mass(0), 1)


@pytest.mark.parametrize("m", [1, 3, 6, 15])
def test_conditional_poisson_relative_precision(m):
    # deep conditioning: compare ratios against scipy's log-pmf
    lam = 0.05
    pmf = conditional_poisson_pmf(lam, m)
    k = np.arange(m, m + 4)
    want = np.exp(stats.poisson.logpmf(k, lam) - stats.poisson.logsf(m - 1, lam))
    assert np.allclose(pmf.probs[:4], want, rtol=1e-9)
    assert pmf.tail_mass <= 1e-12


def test_conditional_nb_matches_truncate():
    params = NegBinParams(2.5, 0.35)
    a = conditional_nb_pmf(params, 2)
    b = conditional_truncate(nb_pmf(params, 1e-15), 2)
    hi = max(a.end, b.end)
    assert np.abs(a.dense(2, hi) - b.dense(2, hi)).max() <= 1e-12


def cp_point_mpmath(lam, n):
    """P(sum_j j K_j = n) by enumerating (K_1, ..., K_J) at 50 digits."""
    mpmath.mp.dps = 50
    lam = [mpmath.mpf(x) for x in lam]

    def rec(j, left):
        if j == len(lam):
            return mpmath.mpf(1) if left == 0 else mpmath.mpf(0)
        size = j + 1
        acc = mpmath.mpf(0)
        for k in range(left // size + 1):
            acc += mpmath.exp(-lam[j]) * lam[j] ** k / mpmath.factorial(k) * rec(j + 1, left - size * k)
        return acc

    return rec(0, n)


@pytest.mark.parametrize("lam,m", [([0.5, 0.25], 1), ([1.0, 0.3, 0.2], 3), ([1e-4, 1e-4], 4), ([0.01, 0.0, 0.02], 5)])
def test_conditional_cp_matches_exact_enumeration(lam, m):
    pmf = conditional_cp_pmf(lam, m)
    below = sum(cp_point_mpmath(lam, n) for n in range(m))
    denom = 1 - below
    for k in range(m, m + 6):
        want = float(cp_point_mpmath(lam, k) / denom)
        assert pmf.prob(k) == pytest.approx(want, rel=1e-9, abs=1e-300)


def test_restarted_cp_agrees_when_no_restart_effect():
    # m = 0 or unit clusters: the restarted recursion is the conditioned law
    for lam, m in (([0.6, 0.3], 0), ([1.5], 2), ([0.2, 0.0, 0.1], 0)):
        a, b = restarted_cp_pmf(lam, m, 1e-15), conditional_cp_pmf(lam, m, 1e-15)
        hi = max(a.end, b.end)
        assert np.abs(a.dense(m, hi) - b.dense(m, hi)).max() <= 1e-13


def test_restarted_cp_differs_for_larger_clusters():
    a, b = restarted_cp_pmf([0.5, 0.2], 1), conditional_cp_pmf([0.5, 0.2], 1)
    # hand values: w1 = 1, w2 = 0.5 / 2 = 0.25; true conditioned law puts mass e^-0.7 (0.125 + 0.2) / ... at 2
    assert a.probs[1] / a.probs[0] == pytest.approx(0.25, rel=1e-14)
    assert b.probs[1] / b.probs[0] == pytest.approx((0.125 + 0.2) / 0.5, rel=1e-12)


def test_restarted_cp_tail_bound():
    tol = 1e-12
    pmf = restarted_cp_pmf([2.0, 0.8, 0.3], 3, tol)
    assert pmf.tail_mass <= tol and abs(1 - total(pmf)) <= 10 * tol


# --- convolution --------------------------------------------------------------

def test_convolve_identity_and_points():
    q = PmfVector(2, [0.2, 0.3, 0.5])
    out = convolve(PmfVector.point_mass(0), q)
    assert out.offset == 2 and np.array_equal(out.probs, q.probs)
    d5 = convolve(PmfVector.point_mass(2), PmfVector.point_mass(3))
    assert d5.offset == 5 and list(d5.probs) == [1.0]


def test_convolve_hand():
    b = PmfVector(1, [0.5, 0.5])
    assert convolve(b, b).as_dict() == {2: 0.25, 3: 0.5, 4: 0.25}


def test_convolve_tails_add():
    a = PmfVector(0, [0.5, 0.49], 0.01, tol=1e-2)
    b = PmfVector(0, [0.98], 0.02, tol=1e-2)
    out = convolve(a, b)
    assert out.tail_mass >= 0.01 + 0.02 - 1e-15


def test_convolve_power():
    u = ClusterDistribution.uniform([1, 2])
    assert convolve_power(u, 2).as_dict() == {2: 0.25, 3: 0.5, 4: 0.25}
    zero = convolve_power(u, 0)
    assert zero.offset == 0 and list(zero.probs) == [1.0]
    five = convolve_power(u, 5)
    assert five.offset == 5
    assert np.allclose(five.probs, stats.binom.pmf(np.arange(6), 5, 0.5), rtol=1e-14)


small_pmfs = st.lists(st.floats(0.01, 1), min_size=1, max_size=6).map(
    lambda w: PmfVector(0, np.array(w) / sum(w))
)


@settings(max_examples=50, deadline=None)
@given(small_pmfs, small_pmfs, small_pmfs)
def test_convolve_commutative_associative(a, b, c):
    ab, ba = convolve(a, b), convolve(b, a)
    assert np.abs(ab.probs - ba.probs).max() <= 1e-12
    l, r = convolve(ab, c), convolve(a, convolve(b, c))
    assert np.abs(l.probs - r.probs).max() <= 1e-12
