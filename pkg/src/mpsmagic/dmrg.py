"""Two-site DMRG on an MPO Hamiltonian."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla
from numpy.typing import NDArray

from .model import SPIN_ONE_MAGNETIZATION, SZ
from .mps import MatrixProductOperator, MatrixProductState, _truncate, canonicalize, expectation_local

__all__ = [
    "DmrgSettings",
    "DmrgResult",
    "dmrg_ground_state",
    "mpo_expectation",
    "zero_magnetization_product_state",
    "total_sz",
]

log = logging.getLogger(__name__)

_DENSE_EIG_DIM = 256


@dataclass(frozen=True)
class DmrgSettings:
    chi_max: int = 64
    n_sweeps: int = 10
    energy_tol: float = 1e-10
    eigensolver_tol: float = 1e-12
    eigensolver_max_iter: int = 300
    cutoff: float = 1e-14

    def __post_init__(self) -> None:
        if self.chi_max < 1:
            raise ValueError("chi_max must be >= 1")
        if self.energy_tol <= 0 or self.eigensolver_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class DmrgResult:
    state: MatrixProductState
    energy: float
    converged: bool
    sweep_energies: list[float] = field(default_factory=list)
    truncation_weights: list[float] = field(default_factory=list)

    def __iter__(self):
        yield self.state
        yield self.energy
        yield self.converged


def zero_magnetization_product_state(num_sites: int, seed: int | None = None) -> MatrixProductState:
    """Random spin-1 basis product state with total S^z = 0."""
    rng = np.random.default_rng(seed)
    k = num_sites // 3
    m = np.array([1] * k + [-1] * k + [0] * (num_sites - 2 * k))
    rng.shuffle(m)
    vectors = []
    for mj in m:
        v = np.zeros(3)
        v[int(np.flatnonzero(SPIN_ONE_MAGNETIZATION == mj)[0])] = 1.0
        vectors.append(v)
    tensors = tuple(v.reshape(1, 3, 1).astype(np.complex128) for v in vectors)
    return MatrixProductState(tensors, 3, 0)


def total_sz(state: MatrixProductState) -> float:
    return float(sum(expectation_local(state, {j: SZ}).real for j in range(state.num_sites)))


def _update_left(env: NDArray, a: NDArray, w: NDArray) -> NDArray:
    """env[a_bra, w, a_ket] -> next left environment."""
    x = np.tensordot(env, a, axes=(2, 0))  # (ab, w, t, bk)
    x = np.tensordot(x, w, axes=([1, 2], [0, 2]))  # (ab, bk, s, w')
    x = np.tensordot(a.conj(), x, axes=([0, 1], [0, 2]))  # (ab', bk, w')
    return x.transpose(0, 2, 1)


def _update_right(env: NDArray, a: NDArray, w: NDArray) -> NDArray:
    """env[b_bra, w, b_ket] -> environment one site further left."""
    x = np.tensordot(a, env, axes=(2, 2))  # (ak, t, bb, w)
    x = np.tensordot(x, w, axes=([1, 3], [2, 3]))  # (ak, bb, w', s)
    x = np.tensordot(a.conj(), x, axes=([1, 2], [3, 1]))  # (ab, ak, w')
    return x.transpose(0, 2, 1)


def mpo_expectation(state: MatrixProductState, mpo: MatrixProductOperator) -> float:
    env = np.ones((1, 1, 1), dtype=np.complex128)
    nrm = np.ones((1, 1, 1), dtype=np.complex128)
    eye = np.eye(state.local_dim, dtype=np.complex128).reshape(1, state.local_dim, state.local_dim, 1)
    for a, w in zip(state.site_tensors, mpo.site_tensors):
        env = _update_left(env, a, w)
        nrm = _update_left(nrm, a, eye)
    return float((env[0, 0, 0] / nrm[0, 0, 0]).real)


def _two_site_matvec(left: NDArray, w1: NDArray, w2: NDArray, right: NDArray, shape: tuple[int, ...]):
    def matvec(v: NDArray) -> NDArray:
        theta = v.reshape(shape)
        x = np.tensordot(left, theta, axes=(2, 0))  # (al, w, t1, t2, br)
        x = np.tensordot(x, w1, axes=([1, 2], [0, 2]))  # (al, t2, br, s1, w1)
        x = np.tensordot(x, w2, axes=([4, 1], [0, 2]))  # (al, br, s1, s2, w2)
        x = np.tensordot(x, right, axes=([4, 1], [1, 2]))  # (al, s1, s2, ar)
        return x.reshape(-1)

    return matvec


def _lowest_eigenpair(matvec, v0: NDArray, settings: DmrgSettings) -> tuple[float, NDArray]:
    n = v0.size
    if n <= _DENSE_EIG_DIM:
        h = np.column_stack([matvec(e) for e in np.eye(n, dtype=np.complex128)])
        h = 0.5 * (h + h.conj().T)
        w, v = np.linalg.eigh(h)
        return float(w[0]), v[:, 0]
    op = spla.LinearOperator((n, n), matvec=matvec, dtype=np.complex128)
    w, v = spla.eigsh(
        op, k=1, which="SA", v0=v0, tol=settings.eigensolver_tol, maxiter=settings.eigensolver_max_iter
    )
    return float(w[0]), v[:, 0]


def dmrg_ground_state(
    mpo: MatrixProductOperator,
    settings: DmrgSettings | None = None,
    seed: int | None = None,
    initial: MatrixProductState | None = None,
) -> DmrgResult:
    """Variational ground state by two-site sweeps.

    Starts from ``initial`` or, for spin-1 chains, from a seeded random product
    state with zero total magnetization. The returned state is right-canonical
    (center 0). Non-convergence within ``n_sweeps`` sets ``converged=False``.
    """
    settings = settings or DmrgSettings()
    n = mpo.num_sites
    if initial is None:
        if mpo.local_dim != 3:
            raise ValueError("default initial state is spin-1 only; pass `initial`")
        initial = zero_magnetization_product_state(n, seed)
    st = canonicalize(initial, 0)
    tensors = list(st.site_tensors)
    ws = mpo.site_tensors
    if n == 1:
        raise ValueError("DMRG needs at least two sites")

    lefts: list[NDArray | None] = [None] * (n + 1)
    rights: list[NDArray | None] = [None] * (n + 1)
    lefts[0] = np.ones((1, 1, 1), dtype=np.complex128)
    rights[n] = np.ones((1, 1, 1), dtype=np.complex128)
    for j in range(n - 1, 0, -1):
        rights[j] = _update_right(rights[j + 1], tensors[j], ws[j])

    sweep_energies: list[float] = []
    trunc: list[float] = []
    converged = False
    energy = np.inf

    def optimize(j: int, move_right: bool) -> tuple[float, float]:
        a, b = tensors[j], tensors[j + 1]
        theta = np.tensordot(a, b, axes=(2, 0))
        shape = theta.shape
        e, v = _lowest_eigenpair(_two_site_matvec(lefts[j], ws[j], ws[j + 1], rights[j + 2], shape), theta.reshape(-1), settings)
        chi_l, d1, d2, chi_r = shape
        u, s, vh = np.linalg.svd(v.reshape(chi_l * d1, d2 * chi_r), full_matrices=False)
        k = _truncate(s, settings.chi_max, settings.cutoff)
        tw = float(np.sum(s[k:] ** 2))
        s = s[:k] / np.linalg.norm(s[:k])
        if move_right:
            tensors[j] = u[:, :k].reshape(chi_l, d1, k)
            tensors[j + 1] = (s[:, None] * vh[:k]).reshape(k, d2, chi_r)
            lefts[j + 1] = _update_left(lefts[j], tensors[j], ws[j])
        else:
            tensors[j] = (u[:, :k] * s).reshape(chi_l, d1, k)
            tensors[j + 1] = vh[:k].reshape(k, d2, chi_r)
            rights[j + 1] = _update_right(rights[j + 2], tensors[j + 1], ws[j + 1])
        return e, tw

    for sweep in range(settings.n_sweeps):
        tw_max = 0.0
        e = energy
        for j in range(n - 1):
            e, tw = optimize(j, True)
            tw_max = max(tw_max, tw)
        for j in range(n - 2, -1, -1):
            e, tw = optimize(j, False)
            tw_max = max(tw_max, tw)
        sweep_energies.append(e)
        trunc.append(tw_max)
        log.debug("sweep %d: E=%.14f max truncation %.3e", sweep, e, tw_max)
        if abs(energy - e) < settings.energy_tol * max(1.0, abs(e)):
            energy = e
            converged = True
            break
        energy = e

    if not converged:
        log.warning("DMRG not converged after %d sweeps (last dE=%.3e)", settings.n_sweeps,
                    abs(sweep_energies[-1] - sweep_energies[-2]) if len(sweep_energies) > 1 else float("nan"))
    tensors[0] = tensors[0] / np.linalg.norm(tensors[0])
    state = MatrixProductState(tuple(tensors), mpo.local_dim, 0)
    return DmrgResult(state, float(energy), converged, sweep_energies, trunc)
