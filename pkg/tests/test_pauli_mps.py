import numpy as np
import pytest

from mpsmagic.model import ModelParams, exact_diagonalization
from mpsmagic.mps import ContractionTooLargeError, from_dense, ghz_state, product_state, random_mps, to_dense
from mpsmagic.pauli import (
    QuditAlgebra,
    brute_force_long_range_magic,
    brute_force_mixed_sre,
    brute_force_sre,
    dense_pauli_spectrum,
    partial_trace,
)
from mpsmagic.pauli_mps import (
    PauliMPS,
    _gram_split,
    _log_replica_transfer,
    hadamard_product,
    log_pauli_moment,
    long_range_magic_pauli_mps,
    pauli_mps_from_components,
    reduced_pauli_mps,
    sre_replica,
    to_pauli_mps,
    trace_out,
)

ALG = QuditAlgebra(3)
STRANGE = np.array([0, 1, -1]) / np.sqrt(2)
T_STATE = np.array([1, np.exp(2j * np.pi / 9), np.exp(-2j * np.pi / 9)]) / np.sqrt(3)


def dense_components(psi_or_rho, n):
    return dense_pauli_spectrum(ALG, psi_or_rho) / 3 ** (n / 2)


def test_product_state_bond_one():
    st = product_state([T_STATE, STRANGE, np.array([1.0, 0, 0])])
    p = to_pauli_mps(st)
    assert p.max_bond == 1
    np.testing.assert_allclose(p.to_dense(), dense_components(to_dense(st), 3), atol=1e-12)


def test_random_state_components_and_parseval():
    st = random_mps(4, 3, 3, seed=0)
    p = to_pauli_mps(st)
    assert p.bond_dims == [9, 9, 9]
    c = p.to_dense()
    np.testing.assert_allclose(c, dense_components(to_dense(st), 4), atol=1e-10)
    assert np.sum(np.abs(c) ** 2) == pytest.approx(1.0, abs=1e-10)
    assert p.component([4, 0, 8, 3]) == pytest.approx(c[((4 * 9 + 0) * 9 + 8) * 9 + 3], abs=1e-12)


def test_constructor_checks_shapes():
    with pytest.raises(ValueError):
        PauliMPS((np.ones((1, 9, 2)),), 3, (0,))
    with pytest.raises(ValueError):
        PauliMPS((np.ones((1, 4, 1)),), 3, (0,))


def test_trace_nothing_is_identity():
    p = to_pauli_mps(random_mps(3, 3, 2, seed=1))
    assert trace_out(p, []) is p


def test_ghz_trace_leaves_maximally_mixed_site():
    p = trace_out(to_pauli_mps(ghz_state(3, 3)), [1, 2])
    c = p.to_dense()
    expected = np.zeros(9)
    expected[0] = 1 / np.sqrt(3)
    np.testing.assert_allclose(c, expected, atol=1e-12)


def test_trace_matches_dense_partial_trace():
    st = random_mps(4, 3, 3, seed=2)
    p = trace_out(to_pauli_mps(st), [0, 3])
    assert p.sites == (1, 2)
    rho = partial_trace(to_dense(st), [1, 2], 3)
    np.testing.assert_allclose(p.to_dense(), dense_components(rho, 2), atol=1e-10)


def test_trace_everything_rejected():
    p = to_pauli_mps(random_mps(2, 3, 2, seed=0))
    with pytest.raises(ValueError):
        trace_out(p, [0, 1])
    with pytest.raises(IndexError):
        trace_out(p, [5])


@pytest.mark.parametrize("keep", [[0, 2, 4], [1, 2, 3], [4], [0, 1, 2, 3, 4]])
def test_reduced_pauli_mps_zip_up(keep):
    st = random_mps(5, 3, 3, seed=3)
    rho = partial_trace(to_dense(st), keep, 3)
    ref = dense_components(rho, len(keep))
    np.testing.assert_allclose(reduced_pauli_mps(st, keep).to_dense(), ref, atol=1e-10)
    # a loose chi_P bypasses the dense route and exercises the zip-up
    np.testing.assert_allclose(reduced_pauli_mps(st, keep, chi_P=10_000).to_dense(), ref, atol=1e-10)


def test_reduced_pauli_mps_long_support_matches_exact_construction():
    st = random_mps(8, 3, 2, seed=4)
    keep = [0, 1, 2, 4, 5, 6, 7]
    zipped = reduced_pauli_mps(st, keep)
    full = trace_out(to_pauli_mps(st), [3])
    rng = np.random.default_rng(0)
    for _ in range(20):
        lab = rng.integers(0, 9, len(keep))
        assert zipped.component(lab) == pytest.approx(full.component(lab), abs=1e-12)


def test_components_round_trip():
    v = dense_components(to_dense(random_mps(3, 3, 2, seed=5)), 3)
    np.testing.assert_allclose(pauli_mps_from_components(v, [0, 1, 2], 3).to_dense(), v, atol=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_sre_replica_stabilizer_fixtures(n):
    uniform = product_state([np.ones(3) / np.sqrt(3)] * 3)
    for st in (product_state([np.array([1.0, 0, 0])] * 3), uniform, ghz_state(4, 3)):
        assert sre_replica(to_pauli_mps(st), n).value == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("n", [2, 3])
def test_sre_replica_matches_brute_force(seed, n):
    st = random_mps(4, 3, 3, seed=seed)
    assert sre_replica(to_pauli_mps(st), n).value == pytest.approx(brute_force_sre(ALG, to_dense(st), n), abs=1e-9)


def test_replica_transfer_route_matches_dense_route():
    p = to_pauli_mps(random_mps(5, 3, 2, seed=6))
    dense = np.log(np.sum(np.abs(p.to_dense()) ** 4))
    assert _log_replica_transfer(p, 2) == pytest.approx(dense, abs=1e-10)


def test_replica_transfer_on_long_product_is_additive():
    st = product_state([T_STATE] * 8)
    single = brute_force_sre(ALG, T_STATE, 2)
    assert sre_replica(to_pauli_mps(st), 2).value == pytest.approx(8 * single, abs=1e-9)


def test_replica_cap():
    p = to_pauli_mps(random_mps(8, 3, 9, seed=0))
    with pytest.raises(ContractionTooLargeError):
        log_pauli_moment(p, 2)


def test_replica_needs_integer_order():
    p = to_pauli_mps(random_mps(3, 3, 2, seed=0))
    with pytest.raises(ValueError):
        sre_replica(p, 1)
    with pytest.raises(ValueError):
        log_pauli_moment(p, 1.5)
    with pytest.raises(ValueError):
        log_pauli_moment(p, 2, "compressed")


def test_mixed_replica_matches_dense():
    st = random_mps(5, 3, 3, seed=7)
    keep = [0, 2, 3]
    rho = partial_trace(to_dense(st), keep, 3)
    res = sre_replica(reduced_pauli_mps(st, keep), 2, for_mixed=True)
    assert res.value == pytest.approx(brute_force_mixed_sre(ALG, rho), abs=1e-9)


def test_hadamard_product_exact():
    x = to_pauli_mps(random_mps(4, 3, 2, seed=8))
    y = to_pauli_mps(random_mps(4, 3, 2, seed=9))
    z = hadamard_product(x, y)
    np.testing.assert_allclose(z.to_dense(), x.to_dense() * y.to_dense(), atol=1e-12)
    assert z.truncation_weight < 1e-20


def test_compressed_without_truncation_equals_exact():
    st = random_mps(5, 3, 2, seed=10)
    p = to_pauli_mps(st)
    exact = sre_replica(p, 2)
    comp = sre_replica(p, 2, "compressed", chi_P=16)
    assert comp.value == pytest.approx(exact.value, abs=1e-9)
    assert comp.accumulated_truncation_weight < 1e-20
    assert comp.as_dict()["mode"] == "compressed"


def test_compressed_error_decreases_with_chi_p():
    st = random_mps(6, 3, 3, seed=2)
    p = to_pauli_mps(st)
    exact = sre_replica(p, 2).value
    errs = [abs(sre_replica(p, 2, "compressed", chi_P=c).value - exact) for c in (2, 4, 8, 16, 32, 81)]
    assert all(b < a for a, b in zip(errs, errs[1:-1]))
    assert errs[-1] < 1e-9
    weights = [sre_replica(reduced_pauli_mps(st, None, c), 2, "compressed", c).accumulated_truncation_weight for c in (2, 4, 8, 16, 32)]
    assert all(b < a for a, b in zip(weights, weights[1:]))


def test_gram_split_matches_truncated_svd():
    rng = np.random.default_rng(11)
    m = (rng.standard_normal((60, 8)) @ np.diag(2.0 ** -np.arange(8)) @ rng.standard_normal((8, 50))).astype(complex)
    u, s, vh, disc = _gram_split(m, 4, 1e-14)
    sv = np.linalg.svd(m, compute_uv=False)
    np.testing.assert_allclose(s, sv[:4], rtol=1e-6)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(u.shape[1]), atol=1e-8)
    best = np.linalg.norm(sv[4:]) ** 2
    assert np.linalg.norm(m - (u * s) @ vh) ** 2 == pytest.approx(best, rel=1e-5)
    assert disc == pytest.approx(best / np.sum(sv**2), rel=1e-5)


def test_long_range_magic_product_of_magic_states():
    st = product_state([STRANGE, T_STATE, STRANGE, T_STATE])
    assert long_range_magic_pauli_mps(st, [0], [2, 3]).value == pytest.approx(0.0, abs=1e-8)


def test_long_range_magic_ground_state_against_dense():
    _, psi = exact_diagonalization(ModelParams(8, 2.93, 2.6, magnetization_sector=0))
    st = from_dense(psi, 3)
    ref = brute_force_long_range_magic(ALG, st, [1, 2], [5, 6, 7])
    assert long_range_magic_pauli_mps(st, [1, 2], [5, 6, 7]).value == pytest.approx(ref, abs=1e-6)


def test_long_range_magic_overlap_rejected():
    with pytest.raises(ValueError):
        long_range_magic_pauli_mps(ghz_state(4, 3), [0, 1], [1])
