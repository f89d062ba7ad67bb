"""Acceptance criteria 1-11, one test each.

Each test records a one-line verdict that the terminal summary prints, then
asserts. Ground states are shared across criteria through a session cache.
"""

import math
import time
import warnings
from dataclasses import replace

import numpy as np
import pytest

from conftest import record
from mpsmagic.cli import ExperimentConfig, SamplerSettings, fit_inverse_chi_squared, ground_state, partition_blocks, run_experiment
from mpsmagic.dmrg import DmrgSettings, dmrg_ground_state
from mpsmagic.markov import MarkovConfig, estimate_long_range_magic, estimate_mutual_info2, estimate_sre_markov, run_chain
from mpsmagic.model import ModelParams, build_mpo, exact_diagonalization, preset
from mpsmagic.mps import Partition, ghz_state, mutual_info_renyi2_exact, product_state, random_mps, to_dense
from mpsmagic.pauli import (
    QuditAlgebra,
    brute_force_long_range_magic,
    brute_force_mana_entropy,
    brute_force_sre,
    check_phase_point_stabilizer,
)
from mpsmagic.pauli_mps import long_range_magic_pauli_mps, reduced_pauli_mps, sre_replica, to_pauli_mps
from mpsmagic.perfect import estimate_sre
from mpsmagic.stats import integrated_autocorr_time, tau_uncertainty

pytestmark = pytest.mark.slow

ALG = QuditAlgebra(3)
HLD = preset("haldane-large-d")
HN = preset("haldane-neel")
CHIS = (2, 4, 8, 16, 32)
MI_SIZES = (16, 28, 40)
# tau_W error is ~tau sqrt(22/n); 4e5 steps resolve a 25% gap at 2 sigma
W_TAU_STEPS = 400_000
STRANGE = np.array([0, 1, -1]) / np.sqrt(2)
T_STATE = np.array([1, np.exp(2j * np.pi / 9), np.exp(-2j * np.pi / 9)]) / np.sqrt(3)


def markov(n_samples, seed, **kw):
    return MarkovConfig(n_samples=n_samples, seed=seed, thinning=1, **kw)


def ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = noise[0] / math.sqrt(1 - phi**2)
    for k in range(1, n):
        x[k] = phi * x[k - 1] + noise[k]
    return x


@pytest.fixture(scope="module")
def chain64(gs_cache):
    t0 = time.time()
    states = {chi: ground_state(64, HLD.jz, HLD.d_anisotropy, chi, 0, cache_dir=gs_cache) for chi in CHIS}
    return states, time.time() - t0


@pytest.fixture(scope="module")
def mi_states(gs_cache):
    t0 = time.time()
    states = {n: ground_state(n, HLD.jz, HLD.d_anisotropy, 20, 0, cache_dir=gs_cache) for n in MI_SIZES}
    return states, time.time() - t0


def test_criterion_01_oracle_equivalence():
    t0 = time.time()
    worst_rep, worst_sigma = 0.0, 0.0
    for seed in range(5):
        st = random_mps(4, 3, 4, seed=seed)
        psi = to_dense(st)
        rep = sre_replica(to_pauli_mps(st), 2).value
        worst_rep = max(worst_rep, abs(rep - brute_force_sre(ALG, psi, 2)))
        est = estimate_sre(st, 1, 10_000, rng=seed)
        worst_sigma = max(worst_sigma, abs(est.mean - brute_force_sre(ALG, psi, 1)) / est.std_error)
    elapsed = time.time() - t0
    ok = worst_rep < 1e-9 and worst_sigma < 3 and elapsed < 120
    record(1, ok, f"max |replica-brute|={worst_rep:.1e}, max perfect deviation={worst_sigma:.2f} sigma, {elapsed:.0f}s")
    assert ok


def test_criterion_02_stabilizer_faithfulness():
    fixtures = {
        "product": product_state([np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]), np.array([1.0, 0, 0])]),
        "uniform": product_state([np.ones(3) / math.sqrt(3)] * 4),
        "ghz": ghz_state(4, 3),
    }
    exact_dev, sampled_sigma = 0.0, 0.0
    for k, st in enumerate(fixtures.values()):
        psi = to_dense(st)
        for n in (0.5, 1, 2, 3):
            exact_dev = max(exact_dev, abs(brute_force_sre(ALG, psi, n)))
        for n in (2, 3):
            exact_dev = max(exact_dev, abs(sre_replica(to_pauli_mps(st), n).value))
        est = estimate_sre(st, 1, 5000, rng=k)
        sampled_sigma = max(sampled_sigma, abs(est.mean) / max(est.std_error, 1e-12) if abs(est.mean) > 1e-10 else 0.0)
        for n in (1.0, 2.0):
            est = estimate_sre_markov(st, n, markov(5000, k, conserve_charge=False))
            sampled_sigma = max(sampled_sigma, abs(est.mean) / max(est.std_error, 1e-12) if abs(est.mean) > 1e-10 else 0.0)
    ok = exact_dev < 1e-10 and sampled_sigma < 3
    record(2, ok, f"max exact |M_n|={exact_dev:.1e}, max sampled deviation={sampled_sigma:.2f} sigma")
    assert ok


def test_criterion_03_dmrg_correctness():
    t0 = time.time()
    worst = 0.0
    for name in ("large-d-xy", "haldane-large-d", "haldane-neel"):
        p = preset(name)
        params = ModelParams(8, p.jz, p.d_anisotropy)
        e_ed, _ = exact_diagonalization(params)
        res = dmrg_ground_state(build_mpo(params), DmrgSettings(chi_max=64), seed=0)
        worst = max(worst, abs(res.energy - e_ed) / abs(e_ed))
    elapsed = time.time() - t0
    ok = worst < 1e-8 and elapsed < 60
    record(3, ok, f"max relative energy error={worst:.1e}, {elapsed:.0f}s")
    assert ok


def test_criterion_04_mana_sre_coincidence():
    t0 = time.time()
    _, psi = exact_diagonalization(ModelParams(6, HN.jz, HN.d_anisotropy))
    stab = check_phase_point_stabilizer(ALG, psi)
    gap = max(abs(brute_force_mana_entropy(ALG, psi, n) - brute_force_sre(ALG, psi, n)) for n in (0.5, 1, 2))
    elapsed = time.time() - t0
    ok = stab and gap < 1e-9 and elapsed < 120
    record(4, ok, f"A_0 psi = psi: {stab}, max |mana - SRE|={gap:.1e}, {elapsed:.0f}s")
    assert ok


def test_criterion_05_m1_inverse_chi_squared(chain64):
    states, dmrg_time = chain64
    t0 = time.time() - dmrg_time
    seed = np.random.SeedSequence([0, 64])
    est = {chi: estimate_sre(st, 1, 10_000, rng=seed) for chi, st in states.items()}
    pts = [(chi, e.mean / 64, e.std_error / 64) for chi, e in est.items() if chi >= 4]
    m0, c, r2 = fit_inverse_chi_squared(pts)
    m16, m32 = est[16].mean / 64, est[32].mean / 64
    sigma = math.hypot(est[16].std_error, est[32].std_error) / 64
    elapsed = time.time() - t0
    values = ", ".join(f"{chi}:{e.mean / 64:.4f}" for chi, e in est.items())
    ok = r2 >= 0.95 and abs(m32 - m16) < 2 * sigma and elapsed < 900
    record(5, ok, f"m1 {{{values}}}, R2(chi>=4)={r2:.3f}, |m1(32)-m1(16)|={abs(m32 - m16):.4f} vs 2sigma={2 * sigma:.4f}, {elapsed:.0f}s")
    assert ok


def test_criterion_06_m2_compressed(chain64):
    states, _ = chain64
    t0 = time.time()
    m2 = {}
    for chi, st in states.items():
        pm = reduced_pauli_mps(st, None, 2 * chi)
        m2[chi] = sre_replica(pm, 2, "compressed", 2 * chi).value / 64
    vals = [m2[chi] for chi in CHIS]
    monotone = all(b >= a for a, b in zip(vals, vals[1:]))
    _, _, r2 = fit_inverse_chi_squared([(chi, v) for chi, v in m2.items()])
    elapsed = time.time() - t0
    values = ", ".join(f"{chi}:{v:.4f}" for chi, v in m2.items())
    ok = monotone and r2 >= 0.9 and elapsed < 1200
    record(6, ok, f"m2 {{{values}}}, monotone={monotone}, R2={r2:.3f}, {elapsed:.0f}s")
    assert ok


def _mutual_info_rows(states, scheme):
    out = {}
    for n, st in states.items():
        a, b = partition_blocks(n, scheme)
        exact = mutual_info_renyi2_exact(st, Partition.from_sites(a), Partition.from_sites(b), 64)
        est = estimate_mutual_info2(st, a, b, markov(100_000, n))
        out[n] = (est, exact)
    return out


def test_criterion_07_mutual_info_connected(mi_states):
    states, dmrg_time = mi_states
    t0 = time.time() - dmrg_time
    rows = _mutual_info_rows(states, "BC")
    dev = max(abs(e.mean - x) / e.std_error for e, x in rows.values())
    exact = [rows[n][1] for n in MI_SIZES]
    inc = np.diff(exact)
    trend = bool(np.all(inc > 0) and np.all(np.diff(inc) < 0))
    elapsed = time.time() - t0
    values = ", ".join(f"{n}:{e.mean:.4f}+-{e.std_error:.4f}/{x:.4f}" for n, (e, x) in rows.items())
    ok = dev < 3 and trend and elapsed < 1800
    record(7, ok, f"I2 markov/oracle {{{values}}}, max deviation={dev:.2f} sigma, log trend={trend}, {elapsed:.0f}s")
    assert ok


def test_criterion_08_mutual_info_disconnected(mi_states):
    rows = _mutual_info_rows(mi_states[0], "AC")
    dev = max(abs(e.mean - x) / e.std_error for e, x in rows.values())
    means = np.array([rows[n][0].mean for n in MI_SIZES])
    spread = float(np.ptp(means) / np.mean(means))
    values = ", ".join(f"{n}:{e.mean:.4f}+-{e.std_error:.4f}/{x:.4f}" for n, (e, x) in rows.items())
    ok = dev < 3 and spread < 0.2
    record(8, ok, f"I2 markov/oracle {{{values}}}, max deviation={dev:.2f} sigma, spread={spread:.1%}")
    assert ok


def test_criterion_09_long_range_magic(gs_cache):
    st = ground_state(12, HN.jz, HN.d_anisotropy, 64, 0, cache_dir=gs_cache)
    a, b = [3, 4, 5], [6, 7, 8]
    lrm, _, _ = estimate_long_range_magic(st, a, b, markov(100_000, 12))
    brute = brute_force_long_range_magic(ALG, st, a, b)
    exact = long_range_magic_pauli_mps(st, a, b).value
    fixtures = {
        "ghz": (ghz_state(4, 3), [0], [2]),
        "product": (product_state([STRANGE, T_STATE, STRANGE, T_STATE]), [0], [2, 3]),
    }
    zero_dev = 0.0
    for k, (fst, fa, fb) in enumerate(fixtures.values()):
        f_lrm, _, _ = estimate_long_range_magic(fst, fa, fb, markov(5000, k, conserve_charge=False))
        zero_dev = max(zero_dev, abs(f_lrm.mean) / f_lrm.std_error if abs(f_lrm.mean) > 1e-10 else 0.0)
    d_brute = abs(lrm.mean - brute) / lrm.std_error
    d_exact = abs(lrm.mean - exact) / lrm.std_error
    ok = d_brute < 3 and d_exact < 3 and zero_dev < 3
    record(9, ok, f"L markov={lrm.mean:.4f}+-{lrm.std_error:.4f}, brute={brute:.4f} ({d_brute:.2f} sigma), "
                  f"pauli-mps={exact:.4f} ({d_exact:.2f} sigma), fixtures max {zero_dev:.2f} sigma")
    assert ok


def test_criterion_10_autocorrelation(mi_states):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tau_ar, _ = integrated_autocorr_time(ar1(0.9, 100_000, 1))
        tau_iid, _ = integrated_autocorr_time(np.random.default_rng(2).standard_normal(100_000))
    st = mi_states[0][40]
    taus = {}
    for scheme in ("AC", "AD"):
        a, b = partition_blocks(40, scheme)
        res = run_chain(st, [a, b], markov(W_TAU_STEPS, 41, weight_exponent=4.0))
        lm = res.log_mags
        log_f = 4.0 * (lm[:, 1] + lm[:, 2] - lm[:, 0])
        f = np.exp(log_f - log_f.max())
        tau, window = integrated_autocorr_time(f)
        taus[scheme] = (tau, tau_uncertainty(tau, window, f.size))
    (t_ac, s_ac), (t_ad, s_ad) = taus["AC"], taus["AD"]
    ordered = t_ac - t_ad > 2 * math.hypot(s_ac, s_ad)
    ok = abs(tau_ar - 19) < 0.15 * 19 and abs(tau_iid - 1) < 0.1 and ordered
    record(10, ok, f"tau AR(1)={tau_ar:.2f}, tau iid={tau_iid:.3f}, tau_W AC={t_ac:.1f}+-{s_ac:.1f} vs AD={t_ad:.1f}+-{s_ad:.1f}")
    assert ok


def test_criterion_11_phase_diagram(tmp_path, gs_cache):
    t0 = time.time()
    cfg = ExperimentConfig("phase-scan", (32,), (16,), sampler=SamplerSettings(n_samples=1000), out_dir=str(tmp_path))
    rows = [r for r in run_experiment(cfg) if r.observable == "m1"]

    def at(jz, d):
        import json

        return next(r for r in rows if json.loads(r.params)["jz"] == jz and json.loads(r.params)["d"] == d)

    haldane, large_d = at(1.0, 0.0), at(1.0, 2.5)
    gap = (haldane.value - large_d.value) / math.hypot(haldane.std_error, large_d.std_error)
    elapsed = time.time() - t0
    finite = len(rows) == 64 and all(np.isfinite(r.value) for r in rows)
    ok = finite and gap > 5 and elapsed < 1200
    record(11, ok, f"{len(rows)} cells, m1 Haldane={haldane.value:.4f}, large-D={large_d.value:.4f}, gap={gap:.1f} sigma, {elapsed:.0f}s")
    assert ok
