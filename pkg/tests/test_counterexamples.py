import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fragdist.counterexamples import (
    G1_cdf,
    G2_cdf,
    bivariate_ratio,
    block_index,
    g1_density,
    oscillation_report,
    ratio_r1,
    sequence_a,
    sequence_b,
    survival_g1,
    trivariate_m1,
    trivariate_m2,
)
from fragdist.errors import DomainError, InvalidParameter, ResolutionError

S2, S3 = math.sqrt(2), math.sqrt(3)


def test_block_index_edges():
    assert block_index(0.0) == 0
    assert block_index(0.4999) == 0
    assert block_index(0.5) == 1
    assert block_index(0.75) == 2
    assert block_index(np.nextafter(0.75, 0)) == 1


@pytest.mark.parametrize("k", range(0, 41))
def test_survival_at_block_starts(k):
    assert survival_g1(1 - 2.0 ** -k) == 2.0 ** -k


@pytest.mark.parametrize("k", range(1, 41))
def test_survival_at_active_ends(k):
    assert survival_g1(1 - 3 * 2.0 ** -(k + 1)) == 2.0 ** -k


def test_cdf_endpoints():
    assert G1_cdf(0.0) == 0.0 and G1_cdf(1.0) == 1.0
    assert G2_cdf(0.0) == 0.0 and G2_cdf(1.0) == 1.0


def test_cdf_against_quadrature():
    # independent route: integrate the density numerically, block by block
    for y in (0.1, 0.3, 0.6, 0.7, 0.8, 0.93, 0.99):
        pts = [b for k in range(12) for b in (1 - 2.0 ** -k, 1 - 3 * 2.0 ** -(k + 2)) if b < y]
        val, _ = integrate.quad(g1_density, 0, y, points=pts, limit=200)
        assert G1_cdf(y) == pytest.approx(val, abs=1e-10)


def test_density_integrates_to_one():
    blocks = [(1 - 2.0 ** -k, 1 - 2.0 ** -(k + 1)) for k in range(45)]
    parts = [integrate.quad(g1_density, lo, hi, points=[1 - 3 * 2.0 ** -(k + 2)])[0] for k, (lo, hi) in enumerate(blocks)]
    assert math.fsum(parts) == pytest.approx(1.0, abs=1e-12)
    assert parts[3] == pytest.approx(2.0 ** -4, rel=1e-12)


def test_ratio_along_sequences():
    for k in range(1, 41):
        assert ratio_r1(sequence_a(k)) == 1.0
        assert ratio_r1(sequence_b(k)) == pytest.approx(2 / 3, abs=1e-15)


def test_ratio_in_gap_strictly_between():
    k = 3
    gap_lo, gap_hi = 1 - 3 * 2.0 ** -(k + 2), 1 - 2.0 ** -(k + 1)
    for y in np.linspace(gap_lo, gap_hi, 7)[1:-1]:
        assert 2 / 3 < ratio_r1(y) < 1


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1, exclude_max=True))
def test_ratio_range(y):
    assert 2 / 3 - 1e-12 <= ratio_r1(y) <= 1 + 1e-12


def test_g2_cdf_valid():
    z = np.linspace(0, 1, 100_001)
    vals = np.array([G2_cdf(x) for x in z])
    assert vals[0] == 0.0 and vals[-1] == 1.0
    assert np.all(np.diff(vals) >= -1e-15)
    for k in range(1, 20):
        assert G2_cdf(1 - 2.0 ** -k) == pytest.approx(1 - 2.0 ** (-2 * k), abs=1e-15)


def test_bivariate_values():
    for k in range(1, 30):
        assert bivariate_ratio(sequence_a(k)) == pytest.approx(S2, rel=1e-15)
        assert bivariate_ratio(sequence_b(k)) == pytest.approx(1.5 * S2, rel=1e-15)


def test_trivariate_values():
    assert trivariate_m1(0.0) == pytest.approx(3 / (S3 + 6), rel=1e-15)
    m1_a = [trivariate_m1(sequence_a(k)) for k in range(1, 41)]
    assert all(b > a for a, b in zip(m1_a, m1_a[1:]))
    assert m1_a[-1] == pytest.approx(1.0, abs=1e-9)
    assert trivariate_m2(sequence_a(20)) == pytest.approx(S3 / (1 + S3), rel=1e-14)
    assert trivariate_m2(sequence_a(20)) == pytest.approx(0.6339745962, abs=1e-10)
    assert trivariate_m2(sequence_b(20)) == pytest.approx(S3 / (2 / 3 + S3), rel=1e-14)


@pytest.mark.parametrize("fn", [ratio_r1, bivariate_ratio, trivariate_m1, trivariate_m2])
def test_domain_errors(fn):
    with pytest.raises(DomainError):
        fn(1.0)
    with pytest.raises(DomainError):
        fn(-0.1)
    with pytest.raises(DomainError):
        G1_cdf(1.5)


def test_oscillation_reports():
    r1 = oscillation_report("r1", 40)
    assert (r1.limit_a, r1.limit_b) == pytest.approx((1, 2 / 3), abs=1e-12)
    assert r1.gap == pytest.approx(1 / 3, abs=1e-9) and r1.settled
    assert oscillation_report("tri1", 40).gap < 1e-9
    assert oscillation_report("biv", 40).gap == pytest.approx(S2 / 2, abs=1e-9)
    tri2 = oscillation_report("trivariate_m2", 40)
    assert tri2.gap == pytest.approx(0.0881, abs=1e-4) and tri2.gap > 0.05
    assert len(tri2.rows()) == 40


def test_oscillation_depth_limits():
    with pytest.raises(ResolutionError):
        oscillation_report("r1", 46)
    oscillation_report("r1", 45)
    with pytest.raises(InvalidParameter):
        oscillation_report("nope", 10)
