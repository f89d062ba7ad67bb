"""Spin-1 XXZ chain with single-ion anisotropy.

    H = sum_i [Sx_i Sx_{i+1} + Sy_i Sy_{i+1} + Jz Sz_i Sz_{i+1}] + D sum_i (Sz_i)^2

with open boundaries (bond sum runs to N-1).

The local basis is ordered {|m=0>, |m=+1>, |m=-1>}, i.e. basis index k holds
S^z = k mod 3. In this order the shift operator X raises S^z by one (mod 3) and
the phase-space point operator A_0 is the global spin flip m -> -m, which is a
symmetry of H.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.typing import NDArray

from .mps import MatrixProductOperator

__all__ = [
    "SZ",
    "SPLUS",
    "SMINUS",
    "SPIN_ONE_MAGNETIZATION",
    "ModelParams",
    "CriticalPoint",
    "critical_point_presets",
    "preset",
    "build_mpo",
    "dense_hamiltonian",
    "exact_diagonalization",
    "ED_MAX_SITES",
    "total_magnetization_basis",
]

ED_MAX_SITES = 10

SPIN_ONE_MAGNETIZATION = np.array([0, 1, -1])
SZ = np.diag(SPIN_ONE_MAGNETIZATION).astype(np.complex128)
SPLUS = np.zeros((3, 3), dtype=np.complex128)
SPLUS[1, 0] = np.sqrt(2.0)  # |0> -> |+1>
SPLUS[0, 2] = np.sqrt(2.0)  # |-1> -> |0>
SMINUS = SPLUS.conj().T


@dataclass(frozen=True)
class ModelParams:
    num_sites: int
    jz: float
    d_anisotropy: float
    magnetization_sector: int | None = None

    def __post_init__(self) -> None:
        if self.num_sites < 2:
            raise ValueError("need at least two sites")


@dataclass(frozen=True)
class CriticalPoint:
    name: str
    jz: float
    d_anisotropy: float
    universality: str


_PRESETS = (
    CriticalPoint("large-d-xy", -0.183, 0.5, "BKT"),
    CriticalPoint("haldane-large-d", 0.5, 0.635, "Gaussian"),
    CriticalPoint("haldane-neel", 2.93, 2.6, "Ising"),
)


def critical_point_presets() -> list[CriticalPoint]:
    """The three transitions studied: BKT, Gaussian and Ising."""
    return list(_PRESETS)


def preset(name: str) -> CriticalPoint:
    for p in _PRESETS:
        if p.name == name:
            return p
    raise KeyError(f"unknown preset {name!r}; choose from {[p.name for p in _PRESETS]}")


def build_mpo(params: ModelParams) -> MatrixProductOperator:
    """Bond-dimension-5 MPO (lower-triangular finite-state-machine form)."""
    eye = np.eye(3, dtype=np.complex128)
    w = np.zeros((5, 3, 3, 5), dtype=np.complex128)
    w[0, :, :, 0] = eye
    w[1, :, :, 0] = SPLUS
    w[2, :, :, 0] = SMINUS
    w[3, :, :, 0] = SZ
    w[4, :, :, 0] = params.d_anisotropy * (SZ @ SZ)
    w[4, :, :, 1] = 0.5 * SMINUS
    w[4, :, :, 2] = 0.5 * SPLUS
    w[4, :, :, 3] = params.jz * SZ
    w[4, :, :, 4] = eye
    n = params.num_sites
    tensors = [w[4:5]] + [w] * (n - 2) + [w[:, :, :, 0:1]]
    return MatrixProductOperator(tuple(tensors), 3)


def _embed(op: NDArray, site: int, n: int) -> sp.csr_matrix:
    left = sp.identity(3**site, format="csr")
    right = sp.identity(3 ** (n - site - 1), format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


def dense_hamiltonian(params: ModelParams, sparse: bool = False):
    """Explicit Hamiltonian matrix built from Kronecker products."""
    n = params.num_sites
    ops = {name: [_embed(m, j, n) for j in range(n)] for name, m in (("z", SZ), ("p", SPLUS), ("m", SMINUS))}
    h = sp.csr_matrix((3**n, 3**n), dtype=np.complex128)
    for j in range(n - 1):
        h = h + 0.5 * (ops["p"][j] @ ops["m"][j + 1] + ops["m"][j] @ ops["p"][j + 1])
        h = h + params.jz * ops["z"][j] @ ops["z"][j + 1]
    for j in range(n):
        h = h + params.d_anisotropy * ops["z"][j] @ ops["z"][j]
    return h if sparse else h.toarray()


def total_magnetization_basis(num_sites: int) -> NDArray[np.int64]:
    """S^z_tot of every computational basis state (site 0 most significant)."""
    m = np.zeros(1, dtype=np.int64)
    for _ in range(num_sites):
        m = (m[:, None] + SPIN_ONE_MAGNETIZATION[None, :]).reshape(-1)
    return m


def exact_diagonalization(params: ModelParams) -> tuple[float, NDArray[np.complex128]]:
    """Lowest eigenpair, optionally within a total-S^z sector.

    The returned vector lives in the full ``3**N`` space.
    """
    n = params.num_sites
    if n > ED_MAX_SITES:
        raise ValueError(f"exact diagonalization capped at N={ED_MAX_SITES}")
    h = dense_hamiltonian(params, sparse=True)
    if params.magnetization_sector is not None:
        idx = np.flatnonzero(total_magnetization_basis(n) == params.magnetization_sector)
        if idx.size == 0:
            raise ValueError("empty magnetization sector")
    else:
        idx = np.arange(3**n)
    hs = h[idx][:, idx]
    if idx.size <= 400:
        w, v = np.linalg.eigh(hs.toarray())
        e, vec = w[0], v[:, 0]
    else:
        rng = np.random.default_rng(0)
        v0 = rng.standard_normal(idx.size)
        w, v = spla.eigsh(hs, k=1, which="SA", tol=1e-14, v0=v0)
        e, vec = w[0], v[:, 0]
    full = np.zeros(3**n, dtype=np.complex128)
    full[idx] = vec
    return float(e), full / np.linalg.norm(full)
