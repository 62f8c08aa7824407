import itertools

import numpy as np
import pytest
from conftest import kron_lsb, random_hermitian
from hypothesis import given
from hypothesis import strategies as st

from incoherent import (
    ResourceError,
    ShadowSet,
    StateVector,
    SupportOperator,
    ValidationError,
    estimate_fidelity_clifford,
    estimate_support_expectation,
    make_product_state,
    median_of_means,
    sample_clifford_shadow,
    sample_pauli_shadow,
)
from incoherent.clifford import all_tableaux, random_clifford_tableau, tableau_unitary
from incoherent.shadows import (
    SNAPSHOT_FACTORS,
    _snapshot_values_direct,
    batch_means,
    clifford_fidelity_values,
    pauli_snapshot_values,
    snapshot_table,
)
from incoherent.sim import PAULI, random_state

S2 = 1 / np.sqrt(2)
# Eigenvectors for outcome bit 0 / 1 of each measured Pauli, written out by hand.
EIGEN = {
    "X": (np.array([S2, S2]), np.array([S2, -S2])),
    "Y": (np.array([S2, 1j * S2]), np.array([S2, -1j * S2])),
    "Z": (np.array([1, 0]), np.array([0, 1])),
}


def snapshot_factor(basis, bit):
    e = EIGEN[basis][bit]
    return 3 * np.outer(e, e.conj()) - np.eye(2)


def exact_pauli_mean(rho, obs_full, n):
    """E over bases and Born outcomes of Tr[snapshot * O], by full enumeration."""
    total = 0.0
    for bases in itertools.product("XYZ", repeat=n):
        for bits in itertools.product((0, 1), repeat=n):
            proj = kron_lsb(*[np.outer(EIGEN[b][o], EIGEN[b][o].conj()) for b, o in zip(bases, bits)])
            p = np.trace(proj @ rho).real
            snap = kron_lsb(*[snapshot_factor(b, o) for b, o in zip(bases, bits)])
            total += p / 3**n * np.trace(snap @ obs_full).real
    return total


def embed(matrix, support, n):
    """Dense n-qubit embedding of an operator whose local bit j is qubit support[j]."""
    full = np.zeros((2**n, 2**n), dtype=complex)
    others = [q for q in range(n) if q not in support]
    for r in range(2**n):
        for c in range(2**n):
            if any(((r >> q) & 1) != ((c >> q) & 1) for q in others):
                continue
            lr = sum(((r >> q) & 1) << j for j, q in enumerate(support))
            lc = sum(((c >> q) & 1) << j for j, q in enumerate(support))
            full[r, c] = matrix[lr, lc]
    return full


def identity_tableau(n):
    tab = np.zeros((2 * n, 2 * n + 1), dtype=bool)
    tab[np.arange(2 * n), np.arange(2 * n)] = True
    return tab


# -- snapshot algebra ------------------------------------------------------------------


@pytest.mark.parametrize("code", range(6))
def test_pauli_snapshot_factor_trace_and_spectrum(code):
    f = SNAPSHOT_FACTORS[code]
    assert np.trace(f).real == pytest.approx(1, abs=1e-15)
    np.testing.assert_allclose(np.linalg.eigvalsh(f), [-1, 2], atol=1e-12)
    np.testing.assert_allclose(f, snapshot_factor("XYZ"[code // 2], code % 2), atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_snapshot_table_matches_kron_definition(seed, k):
    rng = np.random.default_rng(seed)
    obs = SupportOperator(tuple(range(k)), random_hermitian(2**k, rng))
    codes = rng.integers(0, 6, size=(20, k))
    table = snapshot_table(obs)
    flat = codes @ 6 ** np.arange(k)
    np.testing.assert_allclose(table[flat], _snapshot_values_direct(codes, obs), atol=1e-10)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_pauli_estimator_is_unbiased_exactly(seed, n):
    rng = np.random.default_rng(seed)
    psi = random_state(n, rng).amps
    rho = np.outer(psi, psi.conj())
    k = int(rng.integers(1, n + 1))
    support = tuple(sorted(rng.choice(n, size=k, replace=False)))
    obs = SupportOperator(support, random_hermitian(2**k, rng))
    full = embed(obs.matrix, support, n)
    # The table-based per-snapshot value agrees with the dense snapshot on every pattern.
    bases = np.array(list(itertools.product(range(3), repeat=n)), dtype=np.uint8)
    for bits in itertools.product((0, 1), repeat=n):
        shadow = ShadowSet("pauli", n, np.tile(bits, (len(bases), 1)), bases)
        vals = pauli_snapshot_values(shadow, obs)
        for b, v in zip(bases, vals):
            snap = kron_lsb(*[snapshot_factor("XYZ"[i], o) for i, o in zip(b, bits)])
            assert v == pytest.approx(np.trace(snap @ full).real, abs=1e-9)
    assert exact_pauli_mean(rho, full, n) == pytest.approx(np.trace(rho @ full).real, abs=1e-9)


# -- Pauli sampling ----------------------------------------------------------------------


def test_zero_state_z_outcomes_are_zero():
    s = sample_pauli_shadow(StateVector.basis(4, 0), 2000, seed=1)
    assert not s.bits[s.bases == 2].any()


def test_plus_state_born_frequencies():
    s = sample_pauli_shadow(make_product_state(["+"]), 30_000, seed=2)
    x, z = s.bases[:, 0] == 0, s.bases[:, 0] == 2
    assert not s.bits[x, 0].any()
    assert s.bits[z, 0].mean() == pytest.approx(0.5, abs=0.02)


def test_pauli_basis_marginals_uniform():
    s = sample_pauli_shadow(StateVector.basis(3, 0), 10_000, seed=3)
    for q in range(3):
        freq = np.bincount(s.bases[:, q], minlength=3) / s.M
        np.testing.assert_allclose(freq, 1 / 3, atol=0.01)


@pytest.mark.parametrize("sampler", [sample_pauli_shadow, sample_clifford_shadow])
def test_shots_independent_of_total_count(sampler):
    psi = random_state(2, 8)
    short, long = sampler(psi, 50, seed=4), sampler(psi, 120, seed=4)
    assert short == long.subset(range(50))
    assert sampler(psi, 50, seed=5) != short


def test_sampling_rejects_zero_shots():
    with pytest.raises(ValidationError):
        sample_pauli_shadow(StateVector.basis(1), 0, seed=0)
    with pytest.raises(ValidationError):
        sample_clifford_shadow(StateVector.basis(1), 0, seed=0)


# -- Pauli estimation --------------------------------------------------------------------


@pytest.mark.parametrize("support", [(0,), (1, 2), (0, 1, 3)])
def test_identity_observable_estimates_one_with_zero_variance(support):
    s = sample_pauli_shadow(random_state(4, 1), 500, seed=6)
    k = len(support)
    vals = pauli_snapshot_values(s, SupportOperator(support, np.eye(2**k)))
    np.testing.assert_allclose(vals, 1.0, atol=1e-12)


def test_zero_state_z_expectation():
    s = sample_pauli_shadow(StateVector.basis(2, 0), 50_000, seed=7)
    z0 = SupportOperator((0,), PAULI["Z"])
    assert estimate_support_expectation(s, z0) == pytest.approx(1.0, abs=0.03)


def test_weight_two_pauli_within_five_stderr():
    rng = np.random.default_rng(9)
    psi = random_state(4, rng)
    obs = SupportOperator((1, 3), np.kron(PAULI["Y"], PAULI["X"]))
    exact = np.vdot(psi.amps, embed(obs.matrix, obs.support, 4) @ psi.amps).real
    s = sample_pauli_shadow(psi, 200_000, seed=10)
    vals = pauli_snapshot_values(s, obs)
    est = estimate_support_expectation(s, obs)
    assert abs(est - exact) <= 5 * vals.std() / np.sqrt(s.M)


def test_estimator_errors():
    s = sample_pauli_shadow(StateVector.basis(2), 5, seed=0)
    with pytest.raises(ValidationError):
        estimate_support_expectation(s, SupportOperator((0,), PAULI["Z"]), K=6)
    with pytest.raises(ResourceError):
        SupportOperator(tuple(range(13)), np.eye(2))  # cap is checked before shape
    with pytest.raises(ValidationError):
        SupportOperator((0,), np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValidationError):
        SupportOperator((1, 0), np.eye(4))
    c = sample_clifford_shadow(StateVector.basis(1), 5, seed=0)
    with pytest.raises(ValidationError):
        estimate_support_expectation(c, SupportOperator((0,), PAULI["Z"]))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_pauli_variance_grows_like_three_to_weight(k):
    # For a weight-k Pauli string E[value^2] = 3^k exactly, so the variance is
    # 3^k - <P>^2, well inside the c * 4^k envelope.
    psi = make_product_state(["0", "+", "i", "1"])
    obs = SupportOperator(tuple(range(k)), kron_lsb(*[PAULI["Z"]] * k))
    vals = pauli_snapshot_values(sample_pauli_shadow(psi, 60_000, seed=11), obs)
    assert np.mean(vals**2) == pytest.approx(3**k, rel=0.05)
    assert vals.var() <= 4**k


# -- Clifford sampling and estimation -----------------------------------------------------------


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_clifford_snapshot_trace_is_one(seed, n):
    s = sample_clifford_shadow(random_state(n, seed), 20, seed=seed)
    v = s.clifford_rows.conj()  # W^dag |b>
    traces = (2**n + 1) * np.sum(np.abs(v) ** 2, axis=1) - 2**n
    np.testing.assert_allclose(traces, 1.0, atol=1e-12)


def test_clifford_rows_match_snapshot_vectors():
    s = sample_clifford_shadow(random_state(2, 0), 10, seed=1)
    for row, snap in zip(s.clifford_rows, s.snapshots):
        np.testing.assert_allclose(row.conj(), snap.vector(), atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_clifford_measurement_of_mixed_state_averages_to_identity(n):
    # Outcome b uniform (maximally mixed input); E_W[W^dag |b><b| W] = I / 2^n.
    rng = np.random.default_rng(n)
    acc = np.zeros((2**n, 2**n), dtype=complex)
    shots = 4000
    for _ in range(shots):
        w = tableau_unitary(random_clifford_tableau(n, rng))
        v = w[rng.integers(2**n)].conj()
        acc += np.outer(v, v.conj())
    np.testing.assert_allclose(acc / shots, np.eye(2**n) / 2**n, atol=0.02)


@pytest.mark.parametrize("n", [2, 3])
def test_clifford_snapshots_reconstruct_state(n):
    # Unbiased reconstruction of a non-stabilizer state is the 2-design property.
    psi = random_state(n, 21).amps
    s = sample_clifford_shadow(StateVector(n, psi), 20_000, seed=22)
    v = s.clifford_rows.conj()
    rho_hat = (2**n + 1) * np.einsum("mi,mj->ij", v, v.conj()) / s.M - np.eye(2**n)
    np.testing.assert_allclose(rho_hat, np.outer(psi, psi.conj()), atol=0.05)


def test_single_qubit_clifford_estimator_exactly_unbiased():
    psi = random_state(1, 3).amps
    target = random_state(1, 4).amps
    total = 0.0
    for tab in all_tableaux(1):
        w = tableau_unitary(tab)
        for b in range(2):
            p = abs(w[b] @ psi) ** 2
            total += p * (3 * abs(w[b] @ target) ** 2 - 1) / 24
    assert total == pytest.approx(abs(np.vdot(target, psi)) ** 2, abs=1e-12)


def test_fidelity_single_snapshot_identity_clifford():
    for n in (1, 3):
        s = ShadowSet("clifford", n, np.zeros((1, n)), tableaux=identity_tableau(n)[None])
        vals = clifford_fidelity_values(s, StateVector.basis(n, 0))
        assert vals[0] == pytest.approx(2**n, abs=1e-12)


@pytest.mark.parametrize("target_index, expected", [(0, 1.0), (7, 0.0)])
def test_fidelity_estimates_for_zero_state(target_index, expected):
    s = sample_clifford_shadow(StateVector.basis(3, 0), 20_000, seed=12)
    est = estimate_fidelity_clifford(s, StateVector.basis(3, target_index))
    assert est == pytest.approx(expected, abs=0.05)


def test_fidelity_errors():
    s = sample_clifford_shadow(StateVector.basis(2), 10, seed=0)
    with pytest.raises(ValidationError):
        estimate_fidelity_clifford(s, StateVector.basis(3))
    p = sample_pauli_shadow(StateVector.basis(2), 10, seed=0)
    with pytest.raises(ValidationError):
        estimate_fidelity_clifford(p, StateVector.basis(2))
    with pytest.raises(ResourceError):
        sample_clifford_shadow(StateVector.basis(9), 1, seed=0)


def test_clifford_threads_do_not_change_results():
    psi = random_state(3, 5)
    assert sample_clifford_shadow(psi, 300, 6, threads=4) == sample_clifford_shadow(psi, 300, 6)


# -- median of means ---------------------------------------------------------------------------


def test_batch_means_contiguous_larger_first():
    vals = np.arange(11.0)
    np.testing.assert_allclose(batch_means(vals, 3), [1.5, 5.5, 9.0])


@given(
    st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=60),
    st.integers(1, 12),
)
def test_median_of_means_matches_array_split(values, K):
    values = np.array(values)
    if K > len(values):
        with pytest.raises(ValidationError):
            median_of_means(values, K)
        return
    means = [c.mean() for c in np.array_split(values, K)]
    est, _ = median_of_means(values, K)
    assert est == pytest.approx(np.median(means), rel=1e-12, abs=1e-9)


def test_median_of_means_resists_outliers():
    vals = np.ones(1000)
    vals[:50] = 1e6  # one corrupted batch
    assert median_of_means(vals, 10)[0] == pytest.approx(1.0)
