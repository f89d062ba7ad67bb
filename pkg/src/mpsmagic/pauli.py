"""Qudit Heisenberg-Weyl algebra, phase-space point operators and dense oracles.

Single-site operators are labeled by exponent pairs ``(a, a')`` with
``T_{aa'} = omega^(-a a' / 2) Z^a X^a'``; the flat label used for arrays is
``alpha = a * d + a'``. For odd ``d`` the half in the phase is the inverse of 2
modulo ``d``. For ``d = 2`` the Hermitian Pauli set is used instead:
``(0,0)=I, (0,1)=X, (1,0)=Z, (1,1)=Y``.

Everything in this module works on dense vectors and matrices and is meant as
ground truth for small systems (N <= 6 at d = 3).
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "QuditAlgebra",
    "PauliString",
    "PhasePointLabel",
    "weyl_phase",
    "weyl_matrix",
    "weyl_table",
    "heisenberg_weyl_matrix",
    "clock",
    "shift",
    "multiply_strings",
    "string_matrix",
    "single_site_phase_point",
    "phase_point_operator",
    "dense_pauli_spectrum",
    "dense_phase_space_spectrum",
    "partial_trace",
    "sre_from_spectrum",
    "brute_force_sre",
    "brute_force_mixed_sre",
    "brute_force_mana_entropy",
    "brute_force_long_range_magic",
    "brute_force_w",
    "check_phase_point_stabilizer",
    "apply_dense_unitary",
    "fourier_gate",
    "phase_gate",
    "sum_gate",
    "spectrum_labels",
    "write_spectrum_csv",
    "DENSE_SPECTRUM_MAX_SITES",
    "DENSE_PHASE_SPACE_MAX_SITES",
]

DENSE_SPECTRUM_MAX_SITES = 6
DENSE_PHASE_SPACE_MAX_SITES = 6


@dataclass(frozen=True)
class QuditAlgebra:
    d: int

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ValueError("local dimension must be >= 2")

    @property
    def omega(self) -> complex:
        return complex(np.exp(2j * np.pi / self.d))

    @property
    def half_inverse(self) -> int | None:
        """Inverse of 2 modulo d, defined for odd d only."""
        if self.d % 2 == 0:
            return None
        return pow(2, -1, self.d)

    @property
    def odd(self) -> bool:
        return self.d % 2 == 1


@dataclass(frozen=True)
class PauliString:
    """Heisenberg-Weyl string modulo global phase.

    ``exponents[k] = (a, a')`` is the clock/shift exponent pair on the k-th
    site of whatever support the string is attached to.
    """

    exponents: tuple[tuple[int, int], ...]
    d: int

    def __post_init__(self) -> None:
        exps = tuple((int(a) % self.d, int(ap) % self.d) for a, ap in self.exponents)
        object.__setattr__(self, "exponents", exps)

    @classmethod
    def identity(cls, length: int, d: int) -> PauliString:
        return cls(((0, 0),) * length, d)

    @classmethod
    def from_labels(cls, labels: Iterable[int], d: int) -> PauliString:
        return cls(tuple(divmod(int(x), d) for x in labels), d)

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(a * self.d + ap for a, ap in self.exponents)

    def __len__(self) -> int:
        return len(self.exponents)

    def __str__(self) -> str:
        return " ".join(f"{a}:{ap}" for a, ap in self.exponents)


@dataclass(frozen=True)
class PhasePointLabel:
    u: tuple[tuple[int, int], ...]
    d: int

    def __post_init__(self) -> None:
        if self.d % 2 == 0:
            raise ValueError("phase-space point operators need odd d")
        object.__setattr__(self, "u", tuple((int(a) % self.d, int(b) % self.d) for a, b in self.u))


def clock(d: int) -> NDArray[np.complex128]:
    return np.diag(np.exp(2j * np.pi * np.arange(d) / d))


def shift(d: int) -> NDArray[np.complex128]:
    """X|k> = |k+1 mod d>."""
    return np.roll(np.eye(d, dtype=np.complex128), 1, axis=0)


def weyl_phase(d: int, a: int, ap: int) -> complex:
    """Scalar prefactor multiplying Z^a X^a'."""
    if d == 2:
        return (-1j) ** ((a * ap) % 2)
    if d % 2 == 0:
        raise ValueError(f"phase convention undefined for even d={d}")
    h = pow(2, -1, d)
    return complex(np.exp(-2j * np.pi * ((a * ap * h) % d) / d))


@lru_cache(maxsize=None)
def _weyl_cached(d: int, a: int, ap: int) -> NDArray[np.complex128]:
    m = weyl_phase(d, a, ap) * np.linalg.matrix_power(clock(d), a) @ np.linalg.matrix_power(shift(d), ap)
    m.setflags(write=False)
    return m


def weyl_matrix(d: int, a: int, ap: int) -> NDArray[np.complex128]:
    """Single-site Pauli operator for any supported d (odd, or the qubit set)."""
    return _weyl_cached(d, a % d, ap % d)


def heisenberg_weyl_matrix(alg: QuditAlgebra, a: int, ap: int) -> NDArray[np.complex128]:
    """``omega^(-a a' h) Z^a X^a'`` with h the inverse of 2 mod d.

    Raises:
        ValueError: for even d, where the phase convention is undefined.
    """
    if not alg.odd:
        raise ValueError(f"phase convention undefined for even d={alg.d}")
    return weyl_matrix(alg.d, a, ap).copy()


@lru_cache(maxsize=None)
def _all_weyl(d: int) -> NDArray[np.complex128]:
    """(d^2, d, d) stack indexed by the flat label."""
    return np.array([weyl_matrix(d, a, ap) for a in range(d) for ap in range(d)])


def weyl_table(d: int) -> NDArray[np.complex128]:
    """(d^2, d^2) matrix K with K[alpha, s*d + t] = <s|T_alpha|t>."""
    return _all_weyl(d).reshape(d * d, d * d).copy()


def multiply_strings(alg: QuditAlgebra, p: PauliString, q: PauliString) -> PauliString:
    """Product of two strings modulo global phase (exponentwise sum mod d)."""
    if len(p) != len(q):
        raise ValueError("strings have different supports")
    return PauliString(tuple((a + b, ap + bp) for (a, ap), (b, bp) in zip(p.exponents, q.exponents)), alg.d)


def string_matrix(string: PauliString) -> NDArray[np.complex128]:
    out = np.ones((1, 1), dtype=np.complex128)
    for a, ap in string.exponents:
        out = np.kron(out, weyl_matrix(string.d, a, ap))
    return out


def single_site_phase_point(d: int, a: int = 0, ap: int = 0) -> NDArray[np.complex128]:
    """A_u on one site: T_u A_0 T_u^dagger with A_0 = (1/d) sum_u T_u."""
    if d % 2 == 0:
        raise ValueError("phase-space point operators need odd d")
    a0 = _all_weyl(d).sum(axis=0) / d
    t = weyl_matrix(d, a, ap)
    return t @ a0 @ t.conj().T


def phase_point_operator(alg: QuditAlgebra, u: PhasePointLabel | Sequence[tuple[int, int]], num_sites: int) -> NDArray[np.complex128]:
    """Dense d^N x d^N phase-point operator (product over sites)."""
    if not alg.odd:
        raise ValueError("phase-space point operators need odd d")
    if num_sites > DENSE_PHASE_SPACE_MAX_SITES:
        raise ValueError(f"dense phase-point operator capped at N={DENSE_PHASE_SPACE_MAX_SITES}")
    labels = u.u if isinstance(u, PhasePointLabel) else tuple(u)
    if len(labels) != num_sites:
        raise ValueError("label length does not match number of sites")
    out = np.ones((1, 1), dtype=np.complex128)
    for a, ap in labels:
        out = np.kron(out, single_site_phase_point(alg.d, a, ap))
    return out


# ----------------------------------------------------------------------------
# dense spectra


def _as_density(state: NDArray, d: int) -> tuple[NDArray, int]:
    x = np.asarray(state, dtype=np.complex128)
    if x.ndim == 1:
        rho = np.outer(x, x.conj())
    elif x.ndim == 2 and x.shape[0] == x.shape[1]:
        rho = x
    else:
        raise ValueError("expected a state vector or a square density matrix")
    n = int(round(np.log(rho.shape[0]) / np.log(d)))
    if d**n != rho.shape[0]:
        raise ValueError("dimension is not a power of d")
    return rho, n


def _site_basis_change(rho: NDArray, n: int, d: int, kernel: NDArray) -> NDArray:
    """Apply ``kernel[mu, t, s]`` on every site of rho[t, s]; returns (d^2,)*n flat."""
    x = rho.reshape((d,) * (2 * n))
    # interleave row/column indices per site: (t1, s1, t2, s2, ...)
    order = [k for j in range(n) for k in (j, n + j)]
    x = x.transpose(order).reshape((d * d,) * n)
    k2 = kernel.reshape(kernel.shape[0], d * d)
    for j in range(n):
        x = np.tensordot(k2, x, axes=(1, j))
        x = np.moveaxis(x, 0, j)
    return x.reshape(-1)


def dense_pauli_spectrum(alg: QuditAlgebra, state: NDArray, num_sites: int | None = None) -> NDArray[np.complex128]:
    """All Tr(rho T_alpha), flat over labels with site 0 most significant.

    Accepts a state vector or a density matrix. Cost O(N d^(2N+2)).
    """
    d = alg.d
    rho, n = _as_density(state, d)
    if num_sites is not None and num_sites != n:
        raise ValueError("num_sites does not match the input dimension")
    if n > DENSE_SPECTRUM_MAX_SITES:
        raise ValueError(f"dense spectrum capped at N={DENSE_SPECTRUM_MAX_SITES}")
    # Tr(rho T) = sum_{s,t} rho[t, s] T[s, t]
    kernel = _all_weyl(d).transpose(0, 2, 1)
    return _site_basis_change(rho, n, d, kernel)


def dense_phase_space_spectrum(alg: QuditAlgebra, state: NDArray) -> NDArray[np.complex128]:
    """All Tr(rho A_u), flat over u = (a, a') per site."""
    d = alg.d
    if not alg.odd:
        raise ValueError("phase-space point operators need odd d")
    rho, n = _as_density(state, d)
    if n > DENSE_PHASE_SPACE_MAX_SITES:
        raise ValueError(f"dense phase-space spectrum capped at N={DENSE_PHASE_SPACE_MAX_SITES}")
    ops = np.array([single_site_phase_point(d, a, ap) for a in range(d) for ap in range(d)])
    return _site_basis_change(rho, n, d, ops.transpose(0, 2, 1))


def spectrum_labels(d: int, num_sites: int) -> list[PauliString]:
    pairs = [(a, ap) for a in range(d) for ap in range(d)]
    return [PauliString(p, d) for p in itertools.product(pairs, repeat=num_sites)]


def write_spectrum_csv(path: str | Path, spectrum: NDArray, d: int, num_sites: int) -> None:
    """CSV with columns (label, real, imag), one row per string."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "real", "imag"])
        for lab, v in zip(spectrum_labels(d, num_sites), spectrum):
            w.writerow([str(lab), repr(float(v.real)), repr(float(v.imag))])


def partial_trace(state: NDArray, keep: Sequence[int], d: int) -> NDArray[np.complex128]:
    """Reduced density matrix on ``keep`` (sorted) from a vector or density matrix."""
    x = np.asarray(state, dtype=np.complex128)
    keep = sorted(keep)
    if x.ndim == 1:
        n = int(round(np.log(x.size) / np.log(d)))
        psi = x.reshape((d,) * n)
        m = np.moveaxis(psi, keep, list(range(len(keep)))).reshape(d ** len(keep), -1)
        return m @ m.conj().T
    n = int(round(np.log(x.shape[0]) / np.log(d)))
    r = x.reshape((d,) * (2 * n))
    drop = [j for j in range(n) if j not in keep]
    for j in sorted(drop, reverse=True):
        cur = r.ndim // 2
        r = np.trace(r, axis1=j, axis2=cur + j)
    k = d ** len(keep)
    return r.reshape(k, k)


# ----------------------------------------------------------------------------
# entropies


def _renyi_log_sum(values: NDArray, n: float) -> float:
    """(1/(1-n)) log sum values^n for a normalized distribution, Shannon at n=1."""
    v = values[values > 0]
    if np.isclose(n, 1.0):
        return float(-np.sum(v * np.log(v)))
    return float(np.log(np.sum(v**n)) / (1.0 - n))


def sre_from_spectrum(spectrum: NDArray, num_sites: int, d: int, n: float) -> float:
    """M_n of a pure state from its Pauli spectrum."""
    xi = np.abs(spectrum) ** 2 / d**num_sites
    return _renyi_log_sum(xi, n) - num_sites * np.log(d)


def _check_normalized_vector(state: NDArray, tol: float = 1e-8) -> NDArray:
    psi = np.asarray(state, dtype=np.complex128)
    if psi.ndim != 1:
        raise ValueError("expected a pure state vector")
    if abs(np.linalg.norm(psi) - 1.0) > tol:
        raise ValueError("state is not normalized")
    return psi


def brute_force_sre(alg: QuditAlgebra, state: NDArray, n: float) -> float:
    """Stabilizer Renyi entropy of a pure state by full enumeration."""
    psi = _check_normalized_vector(state)
    spectrum = dense_pauli_spectrum(alg, psi)
    num_sites = int(round(np.log(psi.size) / np.log(alg.d)))
    return sre_from_spectrum(spectrum, num_sites, alg.d, n)


def _check_density(rho: NDArray, tol: float = 1e-8) -> NDArray:
    r = np.asarray(rho, dtype=np.complex128)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError("not a density matrix: not square")
    if not np.allclose(r, r.conj().T, atol=tol):
        raise ValueError("not a density matrix: not Hermitian")
    if abs(np.trace(r) - 1.0) > tol:
        raise ValueError("not a density matrix: trace != 1")
    if np.linalg.eigvalsh(r).min() < -tol:
        raise ValueError("not a density matrix: negative eigenvalue")
    return r


def _pauli_moments(alg: QuditAlgebra, rho: NDArray) -> tuple[float, float]:
    """(sum |Tr rho P|^2, sum |Tr rho P|^4)."""
    p2 = np.abs(dense_pauli_spectrum(alg, rho)) ** 2
    return float(p2.sum()), float(np.sum(p2**2))


def brute_force_mixed_sre(alg: QuditAlgebra, rho: NDArray, n: int = 2) -> float:
    """-log( sum |Tr rho P|^4 / sum |Tr rho P|^2 )."""
    if n != 2:
        raise ValueError("the mixed-state SRE is defined for n = 2")
    r = _check_density(rho)
    s2, s4 = _pauli_moments(alg, r)
    return float(-np.log(s4 / s2))


def brute_force_mana_entropy(alg: QuditAlgebra, state: NDArray, n: float) -> float:
    """(1/(1-n)) log sum_u |Tr rho A_u|^(2n) / d^N; Shannon form at n=1."""
    if not alg.odd:
        raise ValueError("mana entropies need odd d")
    psi = np.asarray(state, dtype=np.complex128)
    num_sites = int(round(np.log(psi.shape[0]) / np.log(alg.d)))
    if num_sites > DENSE_PHASE_SPACE_MAX_SITES:
        raise ValueError("dense phase-space evaluation capped")
    w = np.abs(dense_phase_space_spectrum(alg, psi)) ** 2 / alg.d**num_sites
    return _renyi_log_sum(w, n) - num_sites * np.log(alg.d)


def _reduced(alg: QuditAlgebra, state, sites: Sequence[int]) -> NDArray:
    from .mps import MatrixProductState, to_dense

    if isinstance(state, MatrixProductState):
        if state.num_sites > 14:
            raise ValueError("dense reduction capped at N=14")
        state = to_dense(state)
        state = state / np.linalg.norm(state)
    return partial_trace(state, sites, alg.d)


def _ab_sites(a, b) -> tuple[list[int], list[int]]:
    sa = list(a.sites) if hasattr(a, "sites") else sorted(a)
    sb = list(b.sites) if hasattr(b, "sites") else sorted(b)
    if set(sa) & set(sb):
        raise ValueError("partitions overlap")
    if len(sa) + len(sb) > DENSE_SPECTRUM_MAX_SITES:
        raise ValueError(f"|A u B| capped at {DENSE_SPECTRUM_MAX_SITES} sites")
    return sa, sb


def brute_force_long_range_magic(alg: QuditAlgebra, state, a, b) -> float:
    """M2~(rho_AB) - M2~(rho_A) - M2~(rho_B) from dense reduced states."""
    sa, sb = _ab_sites(a, b)
    rho_ab = _reduced(alg, state, sorted(sa + sb))
    rho_a = _reduced(alg, state, sa)
    rho_b = _reduced(alg, state, sb)
    return (
        brute_force_mixed_sre(alg, rho_ab)
        - brute_force_mixed_sre(alg, rho_a)
        - brute_force_mixed_sre(alg, rho_b)
    )


def brute_force_w(alg: QuditAlgebra, state, a, b) -> float:
    """-log( sum|Tr rho_A P|^4 sum|Tr rho_B P|^4 / sum|Tr rho_AB P|^4 )."""
    sa, sb = _ab_sites(a, b)
    _, s4_ab = _pauli_moments(alg, _reduced(alg, state, sorted(sa + sb)))
    _, s4_a = _pauli_moments(alg, _reduced(alg, state, sa))
    _, s4_b = _pauli_moments(alg, _reduced(alg, state, sb))
    return float(-np.log(s4_a * s4_b / s4_ab))


def check_phase_point_stabilizer(alg: QuditAlgebra, state: NDArray, u: Sequence[tuple[int, int]] | None = None, tol: float = 1e-10) -> bool:
    """True iff ||A_u psi - psi|| < tol; u defaults to the origin."""
    if not alg.odd:
        raise ValueError("phase-space point operators need odd d")
    psi = np.asarray(state, dtype=np.complex128)
    d = alg.d
    n = int(round(np.log(psi.size) / np.log(d)))
    labels = [(0, 0)] * n if u is None else list(u)
    x = psi.reshape((d,) * n)
    for j, (a, ap) in enumerate(labels):
        x = np.moveaxis(np.tensordot(single_site_phase_point(d, a, ap), x, axes=(1, j)), 0, j)
    return bool(np.linalg.norm(x.reshape(-1) - psi) < tol)


def apply_dense_unitary(state: NDArray, unitary: NDArray, tol: float = 1e-8) -> NDArray[np.complex128]:
    """U|psi>, normalized.

    Raises:
        ValueError: if U deviates from unitarity by more than ``tol``.
    """
    psi = np.asarray(state, dtype=np.complex128)
    u = np.asarray(unitary, dtype=np.complex128)
    if u.shape != (psi.size, psi.size):
        raise ValueError("dimension mismatch")
    if np.abs(u.conj().T @ u - np.eye(psi.size)).max() > tol:
        raise ValueError("operator is not unitary")
    out = u @ psi
    return out / np.linalg.norm(out)


def fourier_gate(d: int) -> NDArray[np.complex128]:
    j = np.arange(d)
    return np.exp(2j * np.pi * np.outer(j, j) / d) / np.sqrt(d)


def phase_gate(d: int) -> NDArray[np.complex128]:
    """diag(omega^(k(k-1)/2)); equals diag(1, 1, omega) for d = 3."""
    k = np.arange(d)
    return np.diag(np.exp(2j * np.pi * ((k * (k - 1) // 2) % d) / d))


def sum_gate(d: int) -> NDArray[np.complex128]:
    """|j, k> -> |j, j + k mod d>."""
    u = np.zeros((d * d, d * d), dtype=np.complex128)
    for j in range(d):
        for k in range(d):
            u[j * d + (j + k) % d, j * d + k] = 1.0
    return u
