import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcising.spinchain import (
    DENSE_MAX_SITES,
    DensityMatrix,
    DimensionCapError,
    NearDegeneracyWarning,
    SpinChainParams,
    StateVector,
    block_density,
    build_hamiltonian,
    chain_ground_state,
    entanglement_entropy,
    ground_state,
    operator_norm_diff,
    read_matrix_csv,
    reduced_density,
    sorted_spectrum,
    write_matrix_csv,
    zz_correlation,
)

X = np.array([[0.0, 1.0], [1.0, 0.0]])
Z = np.diag([1.0, -1.0])


def kron_hamiltonian(couplings, fields):
    """Independent dense build: leftmost Kronecker factor is the highest bit (last site)."""
    n = len(fields)

    def op(single, b):
        out = np.ones((1, 1))
        for bit in reversed(range(n)):
            out = np.kron(out, single if bit == b else np.eye(2))
        return out

    H = np.zeros((2**n, 2**n))
    for b, lam in enumerate(couplings):
        H -= 0.5 * lam * op(Z, b) @ op(Z, b + 1)
    for b, d in enumerate(fields):
        H -= d * op(X, b)
    return H


def random_state(n, rng):
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return StateVector(v / np.linalg.norm(v), 0)


# -- Hamiltonian ----------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2), st.integers(0, 2), st.data())
def test_hamiltonian_matches_kronecker_build(m, L, data):
    n = 2 * m + L + 1
    lams = data.draw(st.lists(st.floats(0.1, 3.0), min_size=n - 1, max_size=n - 1))
    dels = data.draw(st.lists(st.floats(0.1, 3.0), min_size=n, max_size=n))
    p = SpinChainParams(m, L, tuple(lams), tuple(dels))
    np.testing.assert_allclose(build_hamiltonian(p).dense(), kron_hamiltonian(lams, dels), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.05, 5.0))
def test_two_site_energy_closed_form(lam, delta):
    # even sector of two sites: [[-lam/2, -2 delta], [-2 delta, lam/2]]
    p = SpinChainParams(0, 1, (lam,), (delta, delta))
    _, E = chain_ground_state(p)
    assert E == pytest.approx(-math.sqrt((lam / 2) ** 2 + 4 * delta**2), abs=1e-9)


def test_two_site_energy_minus_sqrt5():
    _, E = chain_ground_state(SpinChainParams(0, 1, (2.0,), (1.0, 1.0)))
    assert E == pytest.approx(-math.sqrt(5), abs=1e-10)


def test_pure_field_single_site():
    psi, E = ground_state(-X)
    assert E == pytest.approx(-1.0, abs=1e-12)
    np.testing.assert_allclose(np.abs(psi.amplitudes), [2**-0.5, 2**-0.5], atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 3), st.floats(0.1, 3.0), st.integers(0, 2**32 - 1))
def test_lanczos_matches_dense_eigh(m, theta, s):
    rng = np.random.default_rng(s)
    n = 2 * m + 1
    p = SpinChainParams(m, 0, tuple(theta * rng.uniform(0.5, 1.5, n - 1)), tuple(rng.uniform(0.5, 1.5, n)))
    H = build_hamiltonian(p)
    psi, E = ground_state(H)
    w, v = np.linalg.eigh(kron_hamiltonian(p.couplings, p.fields))
    assert E == pytest.approx(w[0], abs=1e-9)
    assert abs(abs(np.vdot(v[:, 0], psi.amplitudes)) - 1) < 1e-8
    assert np.linalg.norm(H.apply(psi.amplitudes) - E * psi.amplitudes) <= 1e-9


def test_ground_state_accepts_dense_matrix():
    p = SpinChainParams.from_theta(1, 1, 0.7)
    H = build_hamiltonian(p)
    _, E1 = ground_state(H)
    _, E2 = ground_state(H.dense())
    assert E1 == pytest.approx(E2, abs=1e-10)


def test_ground_state_rejects_non_hermitian():
    with pytest.raises(ValueError):
        ground_state(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_near_degenerate_ground_state_warns():
    rng = np.random.default_rng(0)
    Q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
    H = Q @ np.diag([-1.0, -1.0 + 1e-10, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0]) @ Q.T
    with pytest.warns(NearDegeneracyWarning):
        ground_state(0.5 * (H + H.T))


def test_weak_field_chain_picks_symmetric_state():
    # the start vector is flip-symmetric, so the symmetric partner of the
    # nearly degenerate pair is returned
    psi, _ = chain_ground_state(SpinChainParams.homogeneous(2, 0, 1.0, 1e-2))
    np.testing.assert_allclose(psi.amplitudes, psi.amplitudes[::-1], atol=1e-9)


def test_theta_rescaling_leaves_ground_state_unchanged():
    a = SpinChainParams.homogeneous(2, 1, 1.4, 2.0)
    b = SpinChainParams.from_theta(2, 1, 0.7)
    pa, Ea = chain_ground_state(a)
    pb, Eb = chain_ground_state(b)
    assert Ea == pytest.approx(2.0 * Eb, rel=1e-10)
    assert abs(abs(np.vdot(pa.amplitudes, pb.amplitudes)) - 1) < 1e-9


def test_dimension_cap():
    with pytest.raises(DimensionCapError):
        SpinChainParams.from_theta(10, 0, 1.0)
    p = SpinChainParams.from_theta(3, 0, 1.0)
    assert p.n == DENSE_MAX_SITES - 5
    with pytest.raises(DimensionCapError):
        build_hamiltonian(SpinChainParams.from_theta(6, 1, 1.0)).dense()


@pytest.mark.parametrize(
    "kw",
    [
        dict(m=-1, L=0, couplings=(), fields=(1.0,)),
        dict(m=0, L=1, couplings=(1.0,), fields=(1.0,)),
        dict(m=0, L=1, couplings=(0.0,), fields=(1.0, 1.0)),
    ],
)
def test_params_validation(kw):
    with pytest.raises(ValueError):
        SpinChainParams(**kw)


# -- reduced density ------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 7), st.data(), st.integers(0, 2**32 - 1))
def test_reduced_density_spectrum_matches_schmidt(n, data, s):
    """Eigenvalues of a contiguous block equal squared singular values of the reshaped state."""
    lo = data.draw(st.integers(0, n - 1))
    hi = data.draw(st.integers(lo, n - 1))
    psi = random_state(n, np.random.default_rng(s))
    rho = reduced_density(psi, (lo, hi))
    # Schmidt oracle: bits lo..hi versus the rest
    t = psi.amplitudes.reshape((2,) * n)
    axes = [n - 1 - b for b in range(lo, hi + 1)]
    rest = [a for a in range(n) if a not in axes]
    sv = np.linalg.svd(np.transpose(t, axes + rest).reshape(2 ** (hi - lo + 1), -1), compute_uv=False)
    k = min(len(sv), rho.dim)
    np.testing.assert_allclose(sorted_spectrum(rho)[:k], np.sort(sv**2)[::-1][:k], atol=1e-12)
    assert np.trace(rho.entries).real == pytest.approx(1.0, abs=1e-12)
    assert entanglement_entropy(rho) <= hi - lo + 1 + 1e-9


def test_reduced_density_block_ordering():
    # two sites, site 0 up and site 1 down: index = bit1 set = 2
    amps = np.zeros(4)
    amps[2] = 1.0
    psi = StateVector(amps, 0)
    np.testing.assert_allclose(reduced_density(psi, (0, 0)).entries, np.diag([1.0, 0.0]))
    np.testing.assert_allclose(reduced_density(psi, (1, 1)).entries, np.diag([0.0, 1.0]))
    # site lo is the most significant bit of the block index: (up, down) -> 0b01
    np.testing.assert_allclose(reduced_density(psi, (0, 1)).entries, np.diag([0.0, 1.0, 0.0, 0.0]))


def test_entropy_of_product_and_bell_states():
    prod = StateVector(np.array([1.0, 0, 0, 0]), 0)
    assert entanglement_entropy(reduced_density(prod, (0, 0))) == 0.0
    bell = StateVector(np.array([1.0, 0, 0, 1.0]) / math.sqrt(2), 0)
    assert entanglement_entropy(reduced_density(bell, (0, 0))) == pytest.approx(1.0, abs=1e-12)


def test_density_matrix_checks():
    with pytest.raises(ValueError):
        DensityMatrix(np.array([[1.0, 0.5], [0.0, 0.0]]), (0, 0))
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([0.6, 0.6]), (0, 0))
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([1.5, -0.5]), (0, 0))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_operator_norm_diff_is_a_metric(s):
    rng = np.random.default_rng(s)
    rhos = [reduced_density(random_state(3, rng), (0, 1)) for _ in range(3)]
    a, b, c = rhos
    assert operator_norm_diff(a, a) == pytest.approx(0.0, abs=1e-14)
    assert operator_norm_diff(a, b) == pytest.approx(operator_norm_diff(b, a), abs=1e-14)
    assert operator_norm_diff(a, c) <= operator_norm_diff(a, b) + operator_norm_diff(b, c) + 1e-12
    # sup over unit vectors of |<v|a-b|v>|, sampled from below
    v = rng.normal(size=(200, 4)) + 1j * rng.normal(size=(200, 4))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    D = a.entries - b.entries
    sampled = np.abs(np.einsum("ki,ij,kj->k", v.conj(), D, v)).max()
    assert sampled <= operator_norm_diff(a, b) + 1e-12


def test_zz_correlation_matches_dense_expectation():
    p = SpinChainParams.from_theta(1, 1, 0.8)
    psi, _ = chain_ground_state(p)
    n = p.n
    for x in p.sites:
        for y in p.sites:
            bx, by = x + p.m, y + p.m
            op = np.ones((1, 1))
            for bit in reversed(range(n)):
                f = Z if bit in (bx, by) and bx != by else np.eye(2)
                op = np.kron(op, f)
            expect = float(np.real(np.vdot(psi.amplitudes, op @ psi.amplitudes)))
            assert zz_correlation(psi, x, y) == pytest.approx(expect, abs=1e-12)


def test_block_density_is_valid_and_symmetric():
    rho = block_density(SpinChainParams.from_theta(2, 2, 0.5))
    assert rho.sites == (0, 2)
    e = rho.entries
    # global spin flip symmetry of the ground state
    flip = e[::-1, ::-1]
    np.testing.assert_allclose(e, flip, atol=1e-9)


def test_matrix_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    path = tmp_path / "m.csv"
    write_matrix_csv(A, path)
    np.testing.assert_array_equal(read_matrix_csv(path), A)


def test_ground_state_is_deterministic():
    p = SpinChainParams.from_theta(2, 1, 1.0)
    a, _ = chain_ground_state(p)
    b, _ = chain_ground_state(p)
    np.testing.assert_array_equal(a.amplitudes, b.amplitudes)


def test_no_warning_for_gapped_chain():
    with warnings.catch_warnings():
        warnings.simplefilter("error", NearDegeneracyWarning)
        chain_ground_state(SpinChainParams.from_theta(2, 1, 0.5))
