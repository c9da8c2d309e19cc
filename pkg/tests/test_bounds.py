import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcising.bounds import (
    LN2,
    bounds_report,
    check_disorder_condition,
    choose_K,
    constant_A,
    derived_rates,
    disorder_product,
    entropy_bound,
    lemma1_envelope,
    r_k,
    tail_sum,
)
from rcising.continuum import BoxSpec
from rcising.fkising import estimate_reduced_matrix
from rcising.rcsampler import RcParams


def tail_sum_mpmath(c, xi, nu):
    """Independent tail: -sum_{j>nu} (c j^-xi) log2(c j^-xi) via Hurwitz zeta and its derivative."""
    mpmath.mp.dps = 30
    a = nu + 1
    z = mpmath.zeta(xi, a)
    dz = mpmath.zeta(xi, a, 1)  # d/ds zeta(s, a) = -sum ln(j) j^-s
    return float(c / mpmath.log(2) * (-xi * dz - mpmath.log(c) * z))


# -- constant A and the disorder product ----------------------------------


def test_constant_A_exact():
    assert constant_A(Fraction(1), Fraction(1)) == Fraction(1, 36)
    assert constant_A(1.0, 1.0) == pytest.approx(1 / 36, rel=1e-15)
    assert constant_A(1e-9, 1.0) == pytest.approx(0.25)
    assert constant_A(1e9, 1.0) < 1e-18
    with pytest.raises(ValueError):
        constant_A(0.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.05, 5.0), st.integers(0, 6))
def test_homogeneous_disorder_product_is_power_of_sqrt_A(lam, delta, k):
    n = k + 3
    p = disorder_product(0, k, [lam] * n, [delta] * n)
    assert p == pytest.approx(math.sqrt(constant_A(lam, delta)) ** k, rel=1e-12)


def test_disorder_product_edges():
    assert disorder_product(3, 0, [], []) == 1.0
    with pytest.raises(ValueError):
        disorder_product(-1, 1, [1.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        disorder_product(0, 5, [1.0] * 3, [1.0] * 3)
    # dict inputs accept arbitrary site labels
    lam = {y: 1.0 for y in range(-3, 3)}
    dl = {y: 1.0 for y in range(-3, 3)}
    assert disorder_product(-3, 2, lam, dl) == pytest.approx(1 / 36)


def test_disorder_product_decreases_with_coupling():
    d = [1.0] * 6
    assert disorder_product(0, 3, [2.0] * 6, d) < disorder_product(0, 3, [1.0] * 6, d)


def test_check_disorder_condition():
    ok = check_disorder_condition([0.5, 0.4, 0.5], [1.0, 1.0, 1.2, 1.0], 0.5, 1.0)
    assert ok.holds and ok.worst_ratio == 0.5
    bad = check_disorder_condition([0.5, 0.9], [1.0, 1.0, 1.0], 0.5, 1.0)
    assert not bad.holds and bad.worst_ratio == pytest.approx(0.9) and bad.worst_site == 1
    assert check_disorder_condition([], [1.0], 1.0, 1.0).holds


# -- K, R_K and the envelope ----------------------------------------------


def test_r_k_example():
    assert r_k(1.0, 2 * LN2, 2) == pytest.approx(0.25)


def test_envelope_examples():
    lo, hi = lemma1_envelope(1 / 36, 1, 0.0)
    assert lo == pytest.approx(1 / 1296) and hi == pytest.approx(1296)
    with pytest.raises(ValueError):
        lemma1_envelope(0.1, 1, 0.6)


@pytest.mark.parametrize("C,gamma,K", [(1.0, 1.0, 2), (math.e**4, 1.0, 4), (math.exp(4.5), 1.0, 5), (100.0, 0.5, 10)])
def test_choose_K_examples(C, gamma, K):
    assert choose_K(C, gamma) == K


def check_choose_K_bracketing(n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        C = float(np.exp(rng.uniform(-3, 12)))
        g = float(np.exp(rng.uniform(-3, 2)))
        K = choose_K(C, g)
        assert K >= 2 and C * math.exp(-g * K) <= 1
        assert K == 2 or C * math.exp(-g * (K - 1)) > 1


def test_choose_K_bracketing():
    check_choose_K_bracketing(1000, 0)


def test_choose_K_validation():
    with pytest.raises(ValueError):
        choose_K(0.0, 1.0)
    with pytest.raises(ValueError):
        choose_K(1.0, -1.0)


def test_derived_rates():
    r = derived_rates(2.1)
    assert r == pytest.approx({"density_difference": 0.7, "boundary_mixing": 0.6, "ratio_mixing": 1.05})


# -- entropy bound --------------------------------------------------------


def test_entropy_bound_needs_fast_decay():
    with pytest.raises(ValueError):
        entropy_bound(1.0, 2 * LN2)
    with pytest.raises(ValueError):
        tail_sum(2.0, 1.0, 4)


def test_entropy_bound_reference_point():
    b = entropy_bound(1.0, 4 * LN2)
    assert (b.K, b.nu) == (2, 256)
    assert b.xi == pytest.approx(2.0, abs=1e-15)
    assert b.c == pytest.approx(4096 * 16 / 15, rel=1e-12)
    assert b.c1 == pytest.approx(tail_sum_mpmath(b.c, b.xi, b.nu), abs=1e-6)
    assert b.bound == pytest.approx(8 + b.c1)
    assert b.tail_error < 1e-9


@pytest.mark.parametrize("C,gamma", [(1.0, 2.0), (5.0, 3.0), (1.0, 1.6)])
def test_tail_sum_matches_hurwitz_zeta(C, gamma):
    b = entropy_bound(C, gamma)
    ref = tail_sum_mpmath(b.c, b.xi, b.nu)
    assert b.c1 == pytest.approx(ref, abs=1e-6, rel=1e-9)


def test_tail_sum_is_stable_under_tighter_tolerance():
    a = entropy_bound(1.0, 2.0)
    b = entropy_bound(1.0, 2.0, tol=1e-12)
    assert abs(a.c1 - b.c1) <= a.tail_error + b.tail_error + 1e-9


def test_bounds_report_contents():
    r = bounds_report(1.0, 1.0, 2.0, 1.0)
    assert r["A"] == pytest.approx(1 / 36)
    assert r["K"] == 2
    assert r["entropy_bound"]["K"] == 2
    assert "lemma1_envelope" in r
    slow = bounds_report(1.0, 1.0, 1.0, 1.0)
    assert slow["entropy_bound"] is None
    assert "lemma1_envelope" not in bounds_report(1.0, 1.0, 0.1, 1.0, K=1)


# -- envelope containment on sampled slit laws -----------------------------


def test_joint_ratio_lies_inside_envelope():
    theta, L, K = 0.3, 3, 1
    A = constant_A(theta, 1.0)
    lo, hi = lemma1_envelope(A, K, 0.5)
    r = estimate_reduced_matrix(L, BoxSpec.slit_box(3, L, 6.0), RcParams.from_theta(theta, 2.0), 1500, seed=0)
    row, col = r.marginals()
    ratio = r.joint / np.outer(row, col)
    # crude relative error of the ratio; the envelope is far from sharp
    rel = r.joint_se / np.maximum(r.joint, 1e-300)
    assert np.all(ratio * (1 + 3 * rel) >= lo)
    assert np.all(ratio * (1 - 3 * rel) <= hi)
