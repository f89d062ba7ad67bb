"""Pauli-basis MPS and replica contractions for stabilizer Renyi entropies.

A state rho is stored through its normalized Pauli components
``c_alpha = Tr(rho T_alpha) / d^(L/2)`` over the ``L`` retained sites, as an MPS
with physical dimension ``d^2``. For a pure state sum |c|^2 = 1 and

    sum_P Xi_P^n = sum_alpha |c_alpha|^(2n) = || c * c * ... * c ||^2,

where ``*`` is the elementwise (Hadamard) product over the Pauli index. The
n-fold product is built exactly or compressed to a fixed bond dimension.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from .mps import (
    ContractionTooLargeError,
    MatrixProductState,
    Partition,
    _transfer_identity,
    canonicalize,
    reduced_density_matrix,
)
from .pauli import QuditAlgebra, dense_pauli_spectrum, weyl_table

__all__ = [
    "PauliMPS",
    "ReplicaResult",
    "to_pauli_mps",
    "pauli_mps_from_components",
    "reduced_pauli_mps",
    "trace_out",
    "hadamard_product",
    "log_pauli_moment",
    "sre_replica",
    "long_range_magic_pauli_mps",
    "DENSE_CLOSURE_MAX_SITES",
    "EXACT_REPLICA_MAX_BOND",
]

# exact closure by enumerating all d^(2L) components below this many sites
DENSE_CLOSURE_MAX_SITES = 6
# exact replica transfer needs (bond^n)^2 environment entries
EXACT_REPLICA_MAX_BOND = 4096
# relative singular-value cutoff of the lossless zip-up
LOSSLESS_CUTOFF = 1e-14
# relative singular values kept by the Gram-matrix split
GRAM_FLOOR = 1e-7
# variational sweeps after each zip-up of a truncated product
FIT_SWEEPS = 2


@dataclass(frozen=True)
class PauliMPS:
    """MPS over the flat Pauli label ``alpha = a*d + a'``.

    Attributes:
        site_tensors: ``(left, d^2, right)`` complex tensors.
        local_dim: qudit dimension ``d`` (physical size is ``d^2``).
        sites: original chain positions of the retained sites.
        log_scale: components are ``exp(log_scale)`` times the contraction.
        truncation_weight: accumulated relative discarded weight.
    """

    site_tensors: tuple[NDArray[np.complex128], ...]
    local_dim: int
    sites: tuple[int, ...]
    log_scale: float = 0.0
    truncation_weight: float = 0.0

    def __post_init__(self) -> None:
        if not self.site_tensors:
            raise ValueError("a PauliMPS needs at least one site")
        if len(self.sites) != len(self.site_tensors):
            raise ValueError("sites and tensors differ in length")
        dd = self.local_dim**2
        prev = 1
        for t in self.site_tensors:
            if t.ndim != 3 or t.shape[1] != dd or t.shape[0] != prev:
                raise ValueError("inconsistent PauliMPS tensor shapes")
            prev = t.shape[2]
        if prev != 1:
            raise ValueError("right boundary bond must be 1")

    @property
    def num_sites(self) -> int:
        return len(self.site_tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.site_tensors[:-1]]

    @property
    def max_bond(self) -> int:
        return max([1] + self.bond_dims)

    def component(self, labels: Sequence[int]) -> complex:
        """``c_alpha`` for one flat label per retained site."""
        v = np.ones(1, dtype=np.complex128)
        for t, a in zip(self.site_tensors, labels, strict=True):
            v = v @ t[:, a, :]
        return complex(v[0] * np.exp(self.log_scale))

    def to_dense(self) -> NDArray[np.complex128]:
        """All components, first retained site most significant."""
        if self.num_sites > DENSE_CLOSURE_MAX_SITES:
            raise ContractionTooLargeError(f"dense Pauli vector capped at {DENSE_CLOSURE_MAX_SITES} sites")
        v = np.ones((1, 1), dtype=np.complex128)
        for t in self.site_tensors:
            v = (v @ t.reshape(t.shape[0], -1)).reshape(-1, t.shape[2])
        return v[:, 0] * np.exp(self.log_scale)


def pauli_mps_from_components(components: NDArray, sites: Sequence[int], d: int) -> PauliMPS:
    """Exact PauliMPS of a dense component vector by sequential SVD."""
    dd = d * d
    n = len(sites)
    v = np.asarray(components, dtype=np.complex128)
    if v.size != dd**n:
        raise ValueError("component vector does not match the number of sites")
    tensors = []
    rest = v.reshape(1, -1)
    for _ in range(n - 1):
        m = rest.reshape(rest.shape[0] * dd, -1)
        u, sv, vh, _ = _svd_split(m, None, LOSSLESS_CUTOFF)
        tensors.append(u.reshape(-1, dd, u.shape[1]))
        rest = sv[:, None] * vh
    tensors.append(rest.reshape(rest.shape[0], dd, 1))
    return PauliMPS(tuple(tensors), d, tuple(sites))


@dataclass(frozen=True)
class ReplicaResult:
    value: float
    mode: str
    chi_P: int | None
    accumulated_truncation_weight: float

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "mode": self.mode,
            "chi_P": self.chi_P,
            "accumulated_truncation_weight": self.accumulated_truncation_weight,
        }


def to_pauli_mps(state: MatrixProductState) -> PauliMPS:
    """Exact Pauli-MPS with bond ``chi^2``.

    ``B^alpha[(a,b),(a',b')] = sum_{st} conj(A^s)_{aa'} (T_alpha)_{st} A^t_{bb'} / sqrt(d)``.
    """
    d = state.local_dim
    k = weyl_table(d).reshape(d * d, d, d) / np.sqrt(d)
    tensors = []
    for a in state.site_tensors:
        l, _, r = a.shape
        b = np.einsum("ast,xsy,ztw->axzyw", k, a.conj(), a, optimize=True)
        tensors.append(b.reshape(d * d, l * l, r * r).transpose(1, 0, 2))
    return PauliMPS(tuple(tensors), d, tuple(range(state.num_sites)), 2.0 * state.log_norm)


def _svd_split(m: NDArray, chi_max: int | None, cutoff: float) -> tuple[NDArray, NDArray, NDArray, float]:
    if chi_max is not None and 4 * chi_max <= min(m.shape):
        return _gram_split(m, chi_max, cutoff)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return u[:, :1], s[:1], vh[:1], 0.0
    keep = int(np.count_nonzero(s > cutoff * s[0]))
    if chi_max is not None:
        keep = min(keep, chi_max)
    keep = max(1, keep)
    total = float(np.sum(s**2))
    discarded = float(np.sum(s[keep:] ** 2)) / total
    return u[:, :keep], s[:keep], vh[:keep], discarded


def _gram_split(m: NDArray, chi_max: int, cutoff: float) -> tuple[NDArray, NDArray, NDArray, float]:
    """Truncated SVD through the smaller Gram matrix.

    Much faster than a full SVD when only a few vectors are kept; values below
    ``GRAM_FLOOR * s_0`` are dropped because squaring loses their precision.
    """
    wide = m.shape[0] <= m.shape[1]
    a = m if wide else m.conj().T
    w, v = np.linalg.eigh(a @ a.conj().T)
    w = np.clip(w[::-1], 0.0, None)
    v = v[:, ::-1]
    total = float(w.sum())
    if total == 0.0:
        return np.eye(m.shape[0], 1, dtype=m.dtype), np.zeros(1), np.zeros((1, m.shape[1]), dtype=m.dtype), 0.0
    s = np.sqrt(w)
    keep = int(np.count_nonzero(s > max(cutoff, GRAM_FLOOR) * s[0]))
    keep = max(1, min(keep, chi_max))
    s = s[:keep]
    q = v[:, :keep]
    r = (q.conj().T @ a) / s[:, None]
    discarded = max(0.0, 1.0 - float(np.sum(s**2)) / total)
    if wide:
        return q, s, r, discarded
    return r.conj().T, s, q.conj().T, discarded


def reduced_pauli_mps(
    state: MatrixProductState,
    keep: Iterable[int] | Partition | None = None,
    chi_P: int | None = None,
    cutoff: float = LOSSLESS_CUTOFF,
) -> PauliMPS:
    """Pauli-MPS of the reduced state on ``keep`` by a left-to-right zip-up.

    Sites outside ``keep`` are traced out on the fly (identity projection).
    The bra-ket environment is never expanded to bond ``chi^2``; each retained
    site is split by an SVD truncated to ``chi_P`` (``None``: lossless up to the
    relative ``cutoff``). For a full pure state the remainder is orthonormal,
    so the truncation is the optimal one at every bond.
    """
    n = state.num_sites
    if keep is None:
        sites = list(range(n))
    elif isinstance(keep, Partition):
        keep.check_within(n)
        sites = keep.sites
    else:
        sites = sorted(set(int(j) for j in keep))
    if not sites:
        raise ValueError("tracing out every site leaves a scalar, not a PauliMPS")
    if sites[0] < 0 or sites[-1] >= n:
        raise IndexError("site outside the chain")
    if chi_P is not None and chi_P < 1:
        raise ValueError("chi_P must be >= 1")
    d = state.local_dim
    if chi_P is None and len(sites) <= DENSE_CLOSURE_MAX_SITES:
        # small supports: components of the exact reduced density matrix
        rho = reduced_density_matrix(state, sites)
        comps = dense_pauli_spectrum(QuditAlgebra(d), rho) / d ** (len(sites) / 2)
        return pauli_mps_from_components(comps, sites, d)
    st = state if state.canonical_center == 0 else canonicalize(state, 0)
    dd = d * d
    comb = weyl_table(d) / np.sqrt(d)
    keep_set = set(sites)

    env = np.ones((1, 1), dtype=np.complex128)
    for j in range(sites[0]):
        env = _transfer_identity(env, st.site_tensors[j])
    r_env = env[None]  # (k, bra, ket)
    tensors: list[NDArray] = []
    log_scale = 0.0
    trunc = 0.0
    for j in range(sites[0], sites[-1] + 1):
        a = st.site_tensors[j]
        chi_l, _, chi_r = a.shape
        k = r_env.shape[0]
        x = np.matmul(r_env, a.reshape(chi_l, d * chi_r))  # (k, bra, t r)
        if j not in keep_set:
            x = x.reshape(k, chi_l * d, chi_r)
            r_env = np.matmul(a.conj().reshape(chi_l * d, chi_r).T, x)
            continue
        g = np.matmul(a.conj().reshape(chi_l, d * chi_r).T, x)  # (k, s rb, t rk)
        g = g.reshape(k, d, chi_r, d, chi_r).transpose(1, 3, 0, 2, 4).reshape(dd, -1)
        z = (comb @ g).reshape(dd, k, chi_r, chi_r).transpose(1, 0, 2, 3)
        if j == sites[-1]:
            # right-canonical remainder closes with the identity
            last = np.trace(z, axis1=2, axis2=3)
            tensors.append(last.reshape(k, dd, 1))
            break
        u, s, vh, disc = _svd_split(z.reshape(k * dd, chi_r * chi_r), chi_P, cutoff)
        trunc += disc
        nrm = float(np.linalg.norm(s))
        tensors.append(u.reshape(k, dd, -1))
        r_env = ((s / nrm)[:, None] * vh).reshape(-1, chi_r, chi_r)
        log_scale += np.log(nrm)
    return PauliMPS(tuple(tensors), d, tuple(sites), float(log_scale + 2.0 * st.log_norm), trunc)


def trace_out(pmps: PauliMPS, sites: Iterable[int] | Partition) -> PauliMPS:
    """Trace the listed chain sites out by projecting them onto the identity.

    The projected matrix ``sqrt(d) B[:, 0, :]`` is absorbed into the nearest
    retained neighbour, so the remaining components equal
    ``Tr(rho_A T_alpha) / d^(|A|/2)``.
    """
    drop = set(sites.sites if isinstance(sites, Partition) else (int(j) for j in sites))
    unknown = drop - set(pmps.sites)
    if unknown:
        raise IndexError(f"sites {sorted(unknown)} are not part of this PauliMPS")
    if not drop:
        return pmps
    if drop >= set(pmps.sites):
        raise ValueError("tracing out every site leaves a scalar, not a PauliMPS")
    w = np.sqrt(pmps.local_dim)
    kept: list[NDArray] = []
    kept_sites: list[int] = []
    pending: NDArray | None = None
    for t, j in zip(pmps.site_tensors, pmps.sites):
        if j in drop:
            m = w * t[:, 0, :]
            pending = m if pending is None else pending @ m
            continue
        kept.append(t if pending is None else np.tensordot(pending, t, axes=(1, 0)))
        kept_sites.append(j)
        pending = None
    if pending is not None:
        kept[-1] = np.tensordot(kept[-1], pending, axes=(2, 0))
    return PauliMPS(tuple(kept), pmps.local_dim, tuple(kept_sites), pmps.log_scale, pmps.truncation_weight)


def _right_canonical(pmps: PauliMPS) -> PauliMPS:
    wrapped = MatrixProductState(pmps.site_tensors, pmps.local_dim**2, None)
    st = canonicalize(wrapped, 0, normalize=False)
    return PauliMPS(st.site_tensors, pmps.local_dim, pmps.sites, pmps.log_scale + st.log_norm, pmps.truncation_weight)


def hadamard_product(
    x: PauliMPS,
    y: PauliMPS,
    chi_P: int | None = None,
    cutoff: float = LOSSLESS_CUTOFF,
    sweeps: int = FIT_SWEEPS,
) -> PauliMPS:
    """Elementwise product over the Pauli index, compressed to ``chi_P``.

    A zip-up over right-canonical factors gives the starting point. When the
    product is truncated, ``sweeps`` single-site variational sweeps then
    maximize the overlap with the exact product, since the remainder of a
    product of isometries is not orthonormal and the zip-up alone is not the
    best approximation.
    """
    if x.sites != y.sites or x.local_dim != y.local_dim:
        raise ValueError("factors must live on the same sites")
    x, y = _right_canonical(x), _right_canonical(y)
    dd = x.local_dim**2
    r_env = np.ones((1, 1, 1), dtype=np.complex128)
    tensors: list[NDArray] = []
    log_scale = x.log_scale + y.log_scale
    trunc = x.truncation_weight + y.truncation_weight
    n = x.num_sites
    truncated = False
    for j, (a, b) in enumerate(zip(x.site_tensors, y.site_tensors)):
        z = _product_env(r_env, a, b)  # (k, alpha, xr, yr)
        k, _, xr, yr = z.shape
        if j == n - 1:
            tensors.append(z.reshape(k, dd, 1))
            break
        u, s, vh, disc = _svd_split(z.reshape(k * dd, xr * yr), chi_P, cutoff)
        trunc += disc
        truncated = truncated or disc > 0.0
        nrm = float(np.linalg.norm(s))
        tensors.append(u.reshape(k, dd, -1))
        r_env = ((s / nrm)[:, None] * vh).reshape(-1, xr, yr)
        log_scale += np.log(nrm)
    if truncated and sweeps > 0:
        tensors, log_scale = _fit_product(tensors, x.site_tensors, y.site_tensors, sweeps, x.log_scale + y.log_scale)
    return PauliMPS(tuple(tensors), x.local_dim, x.sites, float(log_scale), trunc)


def _product_env(env: NDArray, a: NDArray, b: NDArray) -> NDArray:
    """env (k, xl, yl) times x_j * y_j -> (k, alpha, xr, yr)."""
    k = env.shape[0]
    dd = a.shape[1]
    t = np.tensordot(env, a, axes=(1, 0))  # (k, yl, alpha, xr)
    t = t.transpose(2, 0, 3, 1).reshape(dd, k * a.shape[2], -1)
    z = np.matmul(t, b.transpose(1, 0, 2))  # (alpha, k xr, yr)
    return z.reshape(dd, k, a.shape[2], b.shape[2]).transpose(1, 0, 2, 3)


def _right_env(env: NDArray, z: NDArray, a: NDArray, b: NDArray) -> NDArray:
    """env (s, xr, yr) with conj(z_j) and x_j * y_j -> (k, xl, yl)."""
    dd = a.shape[1]
    t = np.tensordot(a, env, axes=(2, 1))  # (xl, alpha, s, yr)
    t = t.transpose(1, 0, 2, 3).reshape(dd, -1, b.shape[2])
    t = np.matmul(t, b.transpose(1, 2, 0))  # (alpha, xl s, yl)
    t = t.reshape(dd, a.shape[0], env.shape[0], b.shape[0])
    return np.tensordot(z.conj(), t, axes=([1, 2], [0, 2]))


def _fit_product(zs: list[NDArray], xs, ys, sweeps: int, base_log_scale: float) -> tuple[list[NDArray], float]:
    """Single-site fitting of z to x * y, starting from a left-canonical z."""
    n = len(zs)
    zs = list(zs)
    lefts: list[NDArray] = [np.ones((1, 1, 1), dtype=np.complex128)] + [None] * n  # type: ignore[list-item]
    rights: list[NDArray] = [None] * n + [np.ones((1, 1, 1), dtype=np.complex128)]  # type: ignore[list-item]
    for j in range(n - 1):
        lefts[j + 1] = np.tensordot(zs[j].conj(), _product_env(lefts[j], xs[j], ys[j]), axes=([0, 1], [0, 1]))
    nrm = 1.0
    for sweep in range(sweeps):
        for j in range(n - 1, -1, -1):
            m = np.tensordot(_product_env(lefts[j], xs[j], ys[j]), rights[j + 1], axes=([2, 3], [1, 2]))
            if j == 0:
                nrm = float(np.linalg.norm(m))
                zs[0] = m / nrm
                break
            k, dd, r = m.shape
            q, _ = np.linalg.qr(m.reshape(k, dd * r).T)
            zs[j] = q.T.reshape(-1, dd, r)
            rights[j] = _right_env(rights[j + 1], zs[j], xs[j], ys[j])
        if sweep == sweeps - 1:
            break
        for j in range(n):
            m = np.tensordot(_product_env(lefts[j], xs[j], ys[j]), rights[j + 1], axes=([2, 3], [1, 2]))
            if j == n - 1:
                nrm = float(np.linalg.norm(m))
                zs[j] = m / nrm
                break
            k, dd, r = m.shape
            q, _ = np.linalg.qr(m.reshape(k * dd, r))
            zs[j] = q.reshape(k, dd, -1)
            lefts[j + 1] = np.tensordot(zs[j].conj(), _product_env(lefts[j], xs[j], ys[j]), axes=([0, 1], [0, 1]))
    return zs, base_log_scale + float(np.log(nrm))


def _log_norm_sq(pmps: PauliMPS) -> float:
    env = np.ones((1, 1), dtype=np.complex128)
    log_scale = 0.0
    for t in pmps.site_tensors:
        env = _transfer_identity(env, t)
        s = float(np.max(np.abs(env)))
        env = env / s
        log_scale += np.log(s)
    return float(np.log(env[0, 0].real) + log_scale + 2.0 * pmps.log_scale)


def _log_replica_transfer(pmps: PauliMPS, n: int) -> float:
    """log sum |c|^(2n) by a 2n-layer environment (n plain, n conjugated)."""
    if pmps.max_bond**n > EXACT_REPLICA_MAX_BOND:
        raise ContractionTooLargeError(
            f"exact replica contraction needs bond^{n} = {pmps.max_bond ** n} > {EXACT_REPLICA_MAX_BOND}"
        )
    env = np.ones((1,) * (2 * n), dtype=np.complex128)
    log_scale = 0.0
    for t in pmps.site_tensors:
        r = t.shape[2]
        new = np.zeros((r,) * (2 * n), dtype=np.complex128)
        for alpha in range(t.shape[1]):
            m = t[:, alpha, :]
            mc = m.conj()
            x = env
            # each tensordot consumes the leading axis and appends the new one
            for layer in range(2 * n):
                x = np.tensordot(x, m if layer < n else mc, axes=(0, 0))
            new += x
        s = float(np.max(np.abs(new)))
        if s == 0.0:
            return -np.inf
        env = new / s
        log_scale += np.log(s)
    return float(np.log(env.reshape(-1)[0].real) + log_scale + 2 * n * pmps.log_scale)


def _log_sum_abs_pow(values: NDArray, p: float) -> float:
    a = np.abs(values)
    a = a[a > 0]
    m = a.max()
    return float(p * np.log(m) + np.log(np.sum((a / m) ** p)))


def log_pauli_moment(
    pmps: PauliMPS,
    n: int,
    mode: Literal["exact", "compressed"] = "exact",
    chi_P: int | None = None,
) -> tuple[float, float]:
    """``log sum_alpha |c_alpha|^(2n)`` and the accumulated truncation weight.

    Exact mode enumerates components for at most ``DENSE_CLOSURE_MAX_SITES``
    sites and otherwise contracts 2n replicas sitewise. Compressed mode
    multiplies replicas one at a time, truncating each product to ``chi_P``.
    """
    if int(n) != n or n < 1:
        raise ValueError("replica contraction needs an integer n >= 1")
    n = int(n)
    if mode == "exact":
        if pmps.num_sites <= DENSE_CLOSURE_MAX_SITES:
            return _log_sum_abs_pow(pmps.to_dense(), 2 * n), pmps.truncation_weight
        return _log_replica_transfer(pmps, n), pmps.truncation_weight
    if mode != "compressed":
        raise ValueError(f"unknown mode {mode!r}")
    if chi_P is None:
        raise ValueError("compressed mode needs chi_P")
    prod = pmps
    for _ in range(n - 1):
        prod = hadamard_product(prod, pmps, chi_P)
    return _log_norm_sq(prod), prod.truncation_weight


def sre_replica(
    pmps: PauliMPS,
    n: int = 2,
    mode: Literal["exact", "compressed"] = "exact",
    chi_P: int | None = None,
    for_mixed: bool = False,
) -> ReplicaResult:
    """Stabilizer Renyi entropy from replicas of a Pauli-MPS.

    Pure: ``M_n = log(sum |c|^(2n) / (sum |c|^2)^n) / (1-n) - L log d``; the
    denominator is 1 for an exact pure state. Mixed (``for_mixed``):
    the ratio form ``-log(sum|Tr rho P|^(2n) / sum|Tr rho P|^2) / (n-1)``.
    """
    if n == 1:
        raise ValueError("replica contraction gives integer n >= 2")
    log_n, trunc = log_pauli_moment(pmps, n, mode, chi_P)
    log_1 = _log_norm_sq(pmps)
    # pure: Xi renormalized to a distribution, which matters once truncated
    power = 1.0 if for_mixed else float(n)
    value = (log_n - power * log_1) / (1.0 - n) - pmps.num_sites * np.log(pmps.local_dim)
    return ReplicaResult(float(value), mode, chi_P, float(trunc))


def long_range_magic_pauli_mps(
    state: MatrixProductState,
    a: Partition | Iterable[int],
    b: Partition | Iterable[int],
    chi_P: int | None = None,
) -> ReplicaResult:
    """``M2~(AB) - M2~(A) - M2~(B)``; exact when ``chi_P`` is None."""
    sa = a.sites if isinstance(a, Partition) else sorted(a)
    sb = b.sites if isinstance(b, Partition) else sorted(b)
    if set(sa) & set(sb):
        raise ValueError("partitions overlap")
    mode = "exact" if chi_P is None else "compressed"
    total = 0.0
    trunc = 0.0
    for sign, sites in ((1.0, sorted(sa + sb)), (-1.0, sa), (-1.0, sb)):
        p = reduced_pauli_mps(state, sites, chi_P)
        res = sre_replica(p, 2, mode, chi_P, for_mixed=True)
        total += sign * res.value
        trunc += res.accumulated_truncation_weight
    return ReplicaResult(float(total), mode, chi_P, trunc)
