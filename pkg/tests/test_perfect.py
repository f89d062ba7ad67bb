import io
import warnings

import numpy as np
import pytest
from scipy import stats as sps

from mpsmagic.mps import Partition, canonicalize, expectation_pauli_string, ghz_state, product_state, random_mps, to_dense
from mpsmagic.pauli import PauliString, QuditAlgebra, brute_force_sre, dense_pauli_spectrum
from mpsmagic.perfect import (
    Estimate,
    NotRightCanonicalError,
    estimate_sre,
    read_samples,
    sample_pauli_string,
    sample_pauli_strings,
    sre_from_log_probs,
    write_samples,
)

ALG = QuditAlgebra(3)


def dense_xi(state):
    psi = to_dense(state)
    return np.abs(dense_pauli_spectrum(ALG, psi)) ** 2 / psi.size


def flat_index(labels):
    out = np.zeros(labels.shape[0], dtype=np.int64)
    for col in labels.T:
        out = out * 9 + col
    return out


def test_zero_state_emits_only_clock_strings():
    st = product_state([np.array([1.0, 0, 0])] * 3)
    labels, logp = sample_pauli_strings(st, 2000, rng=0)
    assert np.all(labels % 3 == 0)
    np.testing.assert_allclose(logp, -3 * np.log(3), atol=1e-12)
    counts = np.bincount(labels[:, 1] // 3, minlength=3)
    assert sps.chisquare(counts).pvalue > 0.01


def test_requires_right_canonical():
    st = canonicalize(random_mps(4, 3, 3, seed=0), 2)
    with pytest.raises(NotRightCanonicalError):
        sample_pauli_strings(st, 10)


def test_conditionals_multiply_to_xi():
    st = random_mps(4, 3, 3, seed=1)
    labels, logp = sample_pauli_strings(st, 200, rng=1)
    full = Partition(((0, 4),))
    for lab, lp in zip(labels, logp):
        val = expectation_pauli_string(st, PauliString.from_labels(lab, 3), full)
        assert np.exp(lp) == pytest.approx(abs(val) ** 2 / 81, rel=1e-10)


def test_xi_is_normalized():
    assert dense_xi(random_mps(3, 3, 2, seed=2)).sum() == pytest.approx(1.0)


def test_empirical_frequencies_match_dense_law():
    st = random_mps(3, 3, 2, seed=3)
    xi = dense_xi(st)
    labels, _ = sample_pauli_strings(st, 100_000, rng=3)
    counts = np.bincount(flat_index(labels), minlength=729)
    expected = xi * labels.shape[0]
    big = expected >= 5
    obs = np.append(counts[big], counts[~big].sum())
    exp = np.append(expected[big], expected[~big].sum())
    assert counts[xi < 1e-15].sum() == 0
    assert sps.chisquare(obs, exp).pvalue > 0.01


def test_batch_size_does_not_change_samples():
    st = random_mps(5, 3, 4, seed=4)
    a = sample_pauli_strings(st, 300, rng=9, batch_size=7)
    b = sample_pauli_strings(st, 300, rng=9, batch_size=300)
    assert np.array_equal(a[0], b[0])
    np.testing.assert_allclose(a[1], b[1], atol=1e-12)


def test_single_sample_record():
    rec = sample_pauli_string(random_mps(3, 3, 2, seed=5), rng=0)
    assert 0 < rec.probability <= 1
    assert np.log(rec.probability) == pytest.approx(rec.log_probability, abs=1e-12)


def test_ghz_sre_zero():
    est = estimate_sre(ghz_state(3, 3), 1, 2000, rng=0)
    assert abs(est.mean) <= max(3 * est.std_error, 1e-10)


def test_sre_n1_against_dense():
    st = random_mps(4, 3, 4, seed=6)
    est = estimate_sre(st, 1, 10_000, rng=6)
    ref = brute_force_sre(ALG, to_dense(st), 1)
    assert abs(est.mean - ref) < 3 * est.std_error


def test_sre_n2_against_dense():
    st = random_mps(4, 3, 4, seed=7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = estimate_sre(st, 2, 100_000, rng=7)
    ref = brute_force_sre(ALG, to_dense(st), 2)
    assert abs(est.mean - ref) < 3 * est.std_error


def test_n_not_one_warns():
    with pytest.warns(UserWarning):
        estimate_sre(random_mps(3, 3, 2, seed=0), 2, 10, rng=0)


def test_estimator_errors_scale_like_inverse_sqrt():
    st = random_mps(4, 3, 3, seed=8)
    ref = brute_force_sre(ALG, to_dense(st), 1)
    means = [estimate_sre(st, 1, 400, rng=s).mean for s in range(40)]
    spread_small = np.std(means)
    means_big = [estimate_sre(st, 1, 1600, rng=100 + s).mean for s in range(40)]
    assert np.std(means_big) / spread_small == pytest.approx(0.5, rel=0.35)
    assert abs(np.mean(means_big) - ref) < 4 * np.std(means_big) / np.sqrt(40)


def test_sre_from_log_probs_matches_formula():
    log_xi = np.log(np.full(50, 1 / 81))
    est = sre_from_log_probs(log_xi, 1, 2, 3)
    assert est.mean == pytest.approx(np.log(81) - 2 * np.log(3))
    assert sre_from_log_probs(log_xi, 2, 2, 3).mean == pytest.approx(np.log(81) - 2 * np.log(3))


def test_estimate_validation():
    with pytest.raises(ValueError):
        Estimate(0.0, -1.0, 3)
    with pytest.raises(ValueError):
        estimate_sre(random_mps(3, 3, 2, seed=0), -1, 10)
    with pytest.raises(ValueError):
        estimate_sre(random_mps(3, 3, 2, seed=0), 1, 1)


def test_sample_dump_round_trip():
    st = random_mps(3, 3, 2, seed=0)
    labels, logp = sample_pauli_strings(st, 5, rng=0)
    buf = io.StringIO()
    write_samples(buf, labels, logp, 3)
    buf.seek(0)
    recs = list(read_samples(buf, 3))
    assert [r.string.labels for r in recs] == [tuple(int(x) for x in lab) for lab in labels]
    np.testing.assert_allclose([r.log_probability for r in recs], logp)
