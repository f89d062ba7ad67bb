import numpy as np
import pytest

from mpsmagic.dmrg import DmrgSettings, dmrg_ground_state, mpo_expectation, total_sz
from mpsmagic.model import (
    ModelParams,
    build_mpo,
    critical_point_presets,
    dense_hamiltonian,
    exact_diagonalization,
    preset,
)
from mpsmagic.mps import inner, product_state, to_dense


def spin_one_ops():
    # independent construction in the basis order {|0>, |+1>, |-1>}
    m = np.array([0, 1, -1])
    sz = np.diag(m).astype(complex)
    sp = np.zeros((3, 3), complex)
    for i, mi in enumerate(m):
        for j, mj in enumerate(m):
            if mi == mj + 1:
                sp[i, j] = np.sqrt(2 - mj * (mj + 1))
    sx = (sp + sp.conj().T) / 2
    sy = (sp - sp.conj().T) / 2j
    return sx, sy, sz


def explicit_hamiltonian(n, jz, d):
    sx, sy, sz = spin_one_ops()

    def site(op, j):
        out = np.eye(1)
        for k in range(n):
            out = np.kron(out, op if k == j else np.eye(3))
        return out

    h = sum(site(sx, j) @ site(sx, j + 1) + site(sy, j) @ site(sy, j + 1) + jz * site(sz, j) @ site(sz, j + 1) for j in range(n - 1))
    return h + d * sum(site(sz @ sz, j) for j in range(n))


@pytest.mark.parametrize("n,jz,d", [(2, 1.0, 0.0), (2, 0.0, 5.0), (3, 2.93, 2.6), (4, -0.183, 0.5)])
def test_mpo_matches_explicit_hamiltonian(n, jz, d):
    h = build_mpo(ModelParams(n, jz, d)).to_dense()
    ref = explicit_hamiltonian(n, jz, d)
    np.testing.assert_allclose(h, ref, atol=1e-12)
    np.testing.assert_allclose(h, h.conj().T, atol=1e-12)
    np.testing.assert_allclose(dense_hamiltonian(ModelParams(n, jz, d)), ref, atol=1e-12)


def test_two_site_heisenberg_ground_energy():
    h = build_mpo(ModelParams(2, 1.0, 0.0)).to_dense()
    assert np.linalg.eigvalsh(h)[0] == pytest.approx(-2.0, abs=1e-12)


def test_mpo_bond_dims():
    assert build_mpo(ModelParams(6, 0.5, 0.6)).bond_dims == [1, 5, 5, 5, 5, 5, 1]


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(1, 1.0, 0.0)


def test_ed_two_sites():
    assert exact_diagonalization(ModelParams(2, 1.0, 0.0))[0] == pytest.approx(-2.0)
    assert exact_diagonalization(ModelParams(2, 1.0, 0.0, magnetization_sector=0))[0] == pytest.approx(-2.0)


def test_ed_cap():
    with pytest.raises(ValueError):
        exact_diagonalization(ModelParams(11, 1.0, 0.0))


def test_ed_sector_state_has_zero_magnetization():
    e, psi = exact_diagonalization(ModelParams(5, 1.0, 0.3, magnetization_sector=0))
    p = np.abs(psi.reshape((3,) * 5)) ** 2
    mags = np.array([0, 1, -1])
    grid = np.meshgrid(*([mags] * 5), indexing="ij")
    assert np.sum(p * sum(grid)) == pytest.approx(0.0, abs=1e-10)
    assert e == pytest.approx(np.real(psi.conj() @ dense_hamiltonian(ModelParams(5, 1.0, 0.3)) @ psi))


def test_presets():
    names = {p.name: (p.jz, p.d_anisotropy, p.universality) for p in critical_point_presets()}
    assert names == {
        "large-d-xy": (-0.183, 0.5, "BKT"),
        "haldane-large-d": (0.5, 0.635, "Gaussian"),
        "haldane-neel": (2.93, 2.6, "Ising"),
    }
    assert preset("haldane-neel").jz == 2.93
    with pytest.raises(KeyError):
        preset("nope")


def test_dmrg_settings_validation():
    with pytest.raises(ValueError):
        DmrgSettings(chi_max=0)
    with pytest.raises(ValueError):
        DmrgSettings(energy_tol=0.0)


@pytest.mark.parametrize("name", ["large-d-xy", "haldane-large-d", "haldane-neel"])
def test_dmrg_matches_ed_at_presets(name):
    p = preset(name)
    params = ModelParams(8, p.jz, p.d_anisotropy)
    e_ed, _ = exact_diagonalization(params)
    res = dmrg_ground_state(build_mpo(params), DmrgSettings(chi_max=64), seed=0)
    assert res.energy >= e_ed - 1e-9
    assert abs(res.energy - e_ed) < 1e-8 * abs(e_ed)
    assert abs(total_sz(res.state)) < 1e-8
    assert res.converged
    assert max(res.state.bond_dims) <= 64


def test_dmrg_energies_non_increasing_without_truncation():
    mpo = build_mpo(ModelParams(8, 2.93, 2.6))
    res = dmrg_ground_state(mpo, DmrgSettings(chi_max=81, n_sweeps=6, energy_tol=1e-14), seed=1)
    e = res.sweep_energies
    assert len(e) >= 2
    assert all(b <= a + 1e-10 for a, b in zip(e, e[1:]))
    assert mpo_expectation(res.state, mpo) == pytest.approx(res.energy, abs=1e-8)


def test_dmrg_energy_drift_bounded_by_truncation():
    res = dmrg_ground_state(build_mpo(ModelParams(10, 2.93, 2.6)), DmrgSettings(chi_max=16, n_sweeps=6), seed=1)
    e, tw = res.sweep_energies, res.truncation_weights
    for k in range(1, len(e)):
        assert e[k] <= e[k - 1] + 10 * tw[k] * abs(e[k])


def test_dmrg_large_d_limit():
    res = dmrg_ground_state(build_mpo(ModelParams(4, 1.0, 50.0)), DmrgSettings(chi_max=16), seed=0)
    zero = product_state([np.array([1.0, 0, 0])] * 4)
    assert abs(inner(zero, res.state)) ** 2 > 0.999
    _, psi = exact_diagonalization(ModelParams(4, 1.0, 50.0))
    assert abs(np.vdot(psi, to_dense(res.state))) ** 2 == pytest.approx(1.0, abs=1e-8)


def test_dmrg_bond_cap_respected():
    res = dmrg_ground_state(build_mpo(ModelParams(10, 0.5, 0.635)), DmrgSettings(chi_max=4, n_sweeps=3), seed=0)
    assert max(res.state.bond_dims) <= 4
    assert len(res.truncation_weights) > 0


def test_dmrg_seeded_reproducible():
    mpo = build_mpo(ModelParams(6, 0.5, 0.635))
    a = dmrg_ground_state(mpo, DmrgSettings(chi_max=8, n_sweeps=2), seed=3)
    b = dmrg_ground_state(mpo, DmrgSettings(chi_max=8, n_sweeps=2), seed=3)
    assert a.energy == b.energy
