"""Dense-tensor matrix product states and operators.

Site tensors of a :class:`MatrixProductState` are ordered
``(left bond, physical, right bond)``; operator tensors of a
:class:`MatrixProductOperator` are ordered
``(left bond, physical out, physical in, right bond)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "MatrixProductState",
    "MatrixProductOperator",
    "Partition",
    "SchmidtSpectrum",
    "NullStateError",
    "ContractionTooLargeError",
    "canonicalize",
    "compress",
    "inner",
    "norm",
    "to_dense",
    "from_dense",
    "random_mps",
    "product_state",
    "ghz_state",
    "schmidt_spectrum",
    "entanglement_entropy",
    "expectation_pauli_string",
    "expectation_local",
    "reduced_density_matrix",
    "renyi2_entropy_exact",
    "mutual_info_renyi2_exact",
    "is_left_isometry",
    "is_right_isometry",
]

ISOMETRY_TOL = 1e-10


class NullStateError(ValueError):
    """Raised when a state has zero norm and cannot be gauge-fixed."""


class ContractionTooLargeError(ValueError):
    """Raised when an exact contraction exceeds its configured cost cap."""


@dataclass(frozen=True)
class MatrixProductState:
    """Open-boundary MPS.

    Attributes:
        site_tensors: rank-3 complex tensors ``(chi_left, d, chi_right)``.
        local_dim: physical dimension ``d``.
        canonical_center: site index of the orthogonality center, or None
            when no gauge is guaranteed.
        log_norm: the represented vector is ``exp(log_norm)`` times the
            contraction of ``site_tensors``.
    """

    site_tensors: tuple[NDArray[np.complex128], ...]
    local_dim: int
    canonical_center: int | None = None
    log_norm: float = 0.0

    def __post_init__(self) -> None:
        tensors = tuple(np.asarray(t, dtype=np.complex128) for t in self.site_tensors)
        object.__setattr__(self, "site_tensors", tensors)
        if not tensors:
            raise ValueError("an MPS needs at least one site")
        for j, t in enumerate(tensors):
            if t.ndim != 3 or t.shape[1] != self.local_dim:
                raise ValueError(f"site {j}: expected (chi, {self.local_dim}, chi), got {t.shape}")
        if tensors[0].shape[0] != 1 or tensors[-1].shape[2] != 1:
            raise ValueError("boundary bonds must have dimension 1")
        for j in range(len(tensors) - 1):
            if tensors[j].shape[2] != tensors[j + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {j} and {j + 1}")
        if self.canonical_center is not None and not 0 <= self.canonical_center < len(tensors):
            raise ValueError("canonical center out of range")

    @property
    def num_sites(self) -> int:
        return len(self.site_tensors)

    @property
    def bond_dims(self) -> list[int]:
        """Bond dimensions including the two trivial boundary bonds."""
        return [self.site_tensors[0].shape[0]] + [t.shape[2] for t in self.site_tensors]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims)

    def __len__(self) -> int:
        return self.num_sites

    def __getitem__(self, j: int) -> NDArray[np.complex128]:
        return self.site_tensors[j]


@dataclass(frozen=True)
class MatrixProductOperator:
    site_tensors: tuple[NDArray[np.complex128], ...]
    local_dim: int

    def __post_init__(self) -> None:
        tensors = tuple(np.asarray(t, dtype=np.complex128) for t in self.site_tensors)
        object.__setattr__(self, "site_tensors", tensors)
        d = self.local_dim
        for j, w in enumerate(tensors):
            if w.ndim != 4 or w.shape[1:3] != (d, d):
                raise ValueError(f"site {j}: expected (w, {d}, {d}, w), got {w.shape}")
        if tensors[0].shape[0] != 1 or tensors[-1].shape[3] != 1:
            raise ValueError("boundary bonds must have dimension 1")
        for j in range(len(tensors) - 1):
            if tensors[j].shape[3] != tensors[j + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {j} and {j + 1}")

    @property
    def num_sites(self) -> int:
        return len(self.site_tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [self.site_tensors[0].shape[0]] + [w.shape[3] for w in self.site_tensors]

    def to_dense(self) -> NDArray[np.complex128]:
        """Full ``d**N x d**N`` matrix; only for small N."""
        out = self.site_tensors[0][0]  # (s, t, w)
        for w in self.site_tensors[1:]:
            # (S, T, w) x (w, s, t, w') -> (S, s, T, t, w')
            out = np.einsum("STw,wstv->SsTtv", out, w)
            sh = out.shape
            out = out.reshape(sh[0] * sh[1], sh[2] * sh[3], sh[4])
        return out[:, :, 0]


@dataclass(frozen=True)
class Partition:
    """Sorted, disjoint, nonempty site intervals ``[start, stop)``."""

    blocks: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        blocks = tuple(sorted((int(a), int(b)) for a, b in self.blocks))
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise ValueError("a partition needs at least one block")
        for a, b in blocks:
            if a < 0 or b <= a:
                raise ValueError(f"invalid block [{a}, {b})")
        for (_, b0), (a1, _) in zip(blocks, blocks[1:]):
            if a1 < b0:
                raise ValueError("partition blocks overlap")

    @classmethod
    def from_sites(cls, sites: Iterable[int]) -> Partition:
        """Group an arbitrary set of site indices into maximal intervals."""
        s = sorted(set(int(i) for i in sites))
        if not s:
            raise ValueError("a partition needs at least one site")
        blocks = []
        start = prev = s[0]
        for i in s[1:]:
            if i != prev + 1:
                blocks.append((start, prev + 1))
                start = i
            prev = i
        blocks.append((start, prev + 1))
        return cls(tuple(blocks))

    @property
    def sites(self) -> list[int]:
        return [i for a, b in self.blocks for i in range(a, b)]

    @property
    def size(self) -> int:
        return sum(b - a for a, b in self.blocks)

    def check_within(self, num_sites: int) -> None:
        if self.blocks[-1][1] > num_sites:
            raise IndexError(f"partition {self.blocks} exceeds chain of {num_sites} sites")

    def overlaps(self, other: Partition) -> bool:
        return bool(set(self.sites) & set(other.sites))

    def union(self, other: Partition) -> Partition:
        return Partition.from_sites(self.sites + other.sites)

    def complement(self, num_sites: int) -> list[int]:
        inside = set(self.sites)
        return [i for i in range(num_sites) if i not in inside]


@dataclass(frozen=True)
class SchmidtSpectrum:
    cut: int
    values: NDArray[np.float64] = field(repr=False)


# ----------------------------------------------------------------------------
# gauge fixing


def _qr_left(t: NDArray) -> tuple[NDArray, NDArray]:
    chi_l, d, chi_r = t.shape
    q, r = np.linalg.qr(t.reshape(chi_l * d, chi_r))
    return q.reshape(chi_l, d, q.shape[1]), r


def _qr_right(t: NDArray) -> tuple[NDArray, NDArray]:
    chi_l, d, chi_r = t.shape
    q, r = np.linalg.qr(t.reshape(chi_l, d * chi_r).T)
    return q.T.reshape(q.shape[1], d, chi_r), r.T


def canonicalize(state: MatrixProductState, center: int, normalize: bool = True) -> MatrixProductState:
    """Mixed-canonical form with orthogonality center at ``center``.

    The returned state is normalized; when ``normalize`` is False the norm is
    kept in ``log_norm`` instead.

    Raises:
        NullStateError: if the state has zero norm.
    """
    n = state.num_sites
    if not 0 <= center < n:
        raise IndexError(f"center {center} outside [0, {n})")
    tensors = list(state.site_tensors)
    log_scale = state.log_norm
    for j in range(center):
        q, r = _qr_left(tensors[j])
        s = np.linalg.norm(r)
        if s == 0.0:
            raise NullStateError("null state")
        tensors[j] = q
        tensors[j + 1] = np.tensordot(r / s, tensors[j + 1], axes=(1, 0))
        log_scale += np.log(s)
    for j in range(n - 1, center, -1):
        q, r = _qr_right(tensors[j])
        s = np.linalg.norm(r)
        if s == 0.0:
            raise NullStateError("null state")
        tensors[j] = q
        tensors[j - 1] = np.tensordot(tensors[j - 1], r / s, axes=(2, 0))
        log_scale += np.log(s)
    s = np.linalg.norm(tensors[center])
    if s == 0.0 or not np.isfinite(s):
        raise NullStateError("null state")
    tensors[center] = tensors[center] / s
    log_scale += np.log(s)
    return MatrixProductState(
        tuple(tensors), state.local_dim, center, 0.0 if normalize else float(log_scale)
    )


def is_left_isometry(t: NDArray, tol: float = ISOMETRY_TOL) -> bool:
    m = t.reshape(-1, t.shape[2])
    return bool(np.allclose(m.conj().T @ m, np.eye(t.shape[2]), atol=tol))


def is_right_isometry(t: NDArray, tol: float = ISOMETRY_TOL) -> bool:
    m = t.reshape(t.shape[0], -1)
    return bool(np.allclose(m @ m.conj().T, np.eye(t.shape[0]), atol=tol))


def _truncate(s: NDArray, chi_max: int, cutoff: float) -> int:
    """Number of singular values to keep given a squared-weight cutoff."""
    w = s**2
    total = w.sum()
    if total == 0.0:
        return 1
    # discard the smallest values while their cumulative weight stays below cutoff
    tail = np.cumsum(w[::-1])[::-1] / total
    keep = int(np.count_nonzero(tail > cutoff))
    return max(1, min(chi_max, keep))


def compress(
    state: MatrixProductState, chi_max: int, cutoff: float = 1e-12
) -> tuple[MatrixProductState, float]:
    """SVD truncation to bond dimension ``chi_max``.

    Returns the renormalized, right-canonical (center 0) state and the total
    discarded squared Schmidt weight summed over bonds.
    """
    if chi_max < 1:
        raise ValueError("chi_max must be >= 1")
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    n = state.num_sites
    st = canonicalize(state, n - 1)
    tensors = list(st.site_tensors)
    weight = 0.0
    for j in range(n - 1, 0, -1):
        t = tensors[j]
        chi_l, d, chi_r = t.shape
        u, s, vh = np.linalg.svd(t.reshape(chi_l, d * chi_r), full_matrices=False)
        k = _truncate(s, chi_max, cutoff)
        weight += float(np.sum(s[k:] ** 2) / np.sum(s**2))
        s_kept = s[:k] / np.linalg.norm(s[:k])
        tensors[j] = vh[:k].reshape(k, d, chi_r)
        tensors[j - 1] = np.tensordot(tensors[j - 1], u[:, :k] * s_kept, axes=(2, 0))
    tensors[0] = tensors[0] / np.linalg.norm(tensors[0])
    return MatrixProductState(tuple(tensors), state.local_dim, 0), weight


# ----------------------------------------------------------------------------
# contractions


def _transfer_identity(env: NDArray, a: NDArray) -> NDArray:
    """env'[x, z] = sum_s conj(A[., s, x]) env A[., s, z]; env is (bra, ket)."""
    chi_l, d, chi_r = a.shape
    x = (env @ a.reshape(chi_l, d * chi_r)).reshape(chi_l * d, chi_r)
    return a.conj().reshape(chi_l * d, chi_r).T @ x


def _transfer_op(env: NDArray, a: NDArray, op: NDArray) -> NDArray:
    """env'[x, z] = sum_{s,t} op[s, t] conj(A[., s, x]) env A[., t, z]."""
    chi_l, d, chi_r = a.shape
    x = (env @ a.reshape(chi_l, d * chi_r)).reshape(chi_l, d, chi_r)
    x = np.tensordot(op, x, axes=(1, 1))  # (s, chi_l, chi_r)
    return a.conj().transpose(2, 1, 0).reshape(chi_r, d * chi_l) @ x.reshape(d * chi_l, chi_r)


def inner(bra: MatrixProductState, ket: MatrixProductState) -> complex:
    """<bra|ket> including both ``log_norm`` factors."""
    if bra.num_sites != ket.num_sites or bra.local_dim != ket.local_dim:
        raise ValueError("states live on different Hilbert spaces")
    env = np.ones((1, 1), dtype=np.complex128)
    log_scale = 0.0
    for a, b in zip(bra.site_tensors, ket.site_tensors):
        chi_l, d, chi_r = b.shape
        x = (env @ b.reshape(chi_l, d * chi_r)).reshape(env.shape[0] * d, chi_r)
        env = a.conj().reshape(a.shape[0] * d, a.shape[2]).T @ x
        s = np.abs(env).max()
        if s == 0.0:
            return 0.0j
        env = env / s
        log_scale += np.log(s)
    return complex(env[0, 0] * np.exp(log_scale + bra.log_norm + ket.log_norm))


def norm(state: MatrixProductState) -> float:
    return float(np.sqrt(abs(inner(state, state))))


def to_dense(state: MatrixProductState) -> NDArray[np.complex128]:
    """Full state vector of length ``d**N`` (site 0 is the most significant digit)."""
    out = state.site_tensors[0][0]
    for t in state.site_tensors[1:]:
        out = np.tensordot(out, t, axes=(out.ndim - 1, 0))
        out = out.reshape(-1, t.shape[2])
    return out[:, 0] * np.exp(state.log_norm)


def from_dense(
    vector: NDArray, local_dim: int, chi_max: int | None = None, cutoff: float = 0.0
) -> MatrixProductState:
    """Exact (or truncated) MPS of a dense state vector by sequential SVD."""
    v = np.asarray(vector, dtype=np.complex128)
    d = local_dim
    n = int(round(np.log(v.size) / np.log(d)))
    if d**n != v.size:
        raise ValueError("vector length is not a power of the local dimension")
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise NullStateError("null state")
    rest = (v / nrm).reshape(1, -1)
    tensors = []
    for _ in range(n - 1):
        chi_l = rest.shape[0]
        m = rest.reshape(chi_l * d, -1)
        u, s, vh = np.linalg.svd(m, full_matrices=False)
        if chi_max is None and cutoff == 0.0:
            k = max(1, int(np.count_nonzero(s > 1e-14 * s[0])))
        else:
            k = _truncate(s, chi_max or len(s), cutoff)
        tensors.append(u[:, :k].reshape(chi_l, d, k))
        rest = s[:k, None] * vh[:k]
    tensors.append(rest.reshape(rest.shape[0], d, 1))
    return canonicalize(MatrixProductState(tuple(tensors), d), 0)


def random_mps(num_sites: int, local_dim: int, chi: int, seed: int | None = None) -> MatrixProductState:
    """Normalized random MPS with Gaussian complex entries, right-canonical."""
    rng = np.random.default_rng(seed)
    d = local_dim
    bonds = [1]
    for j in range(1, num_sites):
        bonds.append(int(min(chi, d**j, d ** (num_sites - j))))
    bonds.append(1)
    tensors = []
    for j in range(num_sites):
        shape = (bonds[j], d, bonds[j + 1])
        tensors.append(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return canonicalize(MatrixProductState(tuple(tensors), d), 0)


def product_state(vectors: Sequence[NDArray]) -> MatrixProductState:
    """Product state from one local vector per site (each normalized)."""
    tensors = []
    for v in vectors:
        v = np.asarray(v, dtype=np.complex128)
        tensors.append((v / np.linalg.norm(v)).reshape(1, -1, 1))
    return MatrixProductState(tuple(tensors), tensors[0].shape[1], 0)


def ghz_state(num_sites: int, local_dim: int) -> MatrixProductState:
    """(|0..0> + |1..1> + ... + |d-1..d-1>)/sqrt(d) with bond dimension d."""
    d = local_dim
    if num_sites == 1:
        return product_state([np.ones(d)])
    first = np.zeros((1, d, d), dtype=np.complex128)
    bulk = np.zeros((d, d, d), dtype=np.complex128)
    last = np.zeros((d, d, 1), dtype=np.complex128)
    for k in range(d):
        first[0, k, k] = 1.0 / np.sqrt(d)
        bulk[k, k, k] = 1.0
        last[k, k, 0] = 1.0
    return canonicalize(MatrixProductState((first,) + (bulk,) * (num_sites - 2) + (last,), d), 0)


# ----------------------------------------------------------------------------
# entanglement


def schmidt_spectrum(state: MatrixProductState, cut: int) -> SchmidtSpectrum:
    """Schmidt values across the bond between sites ``cut - 1`` and ``cut``."""
    n = state.num_sites
    if not 0 < cut < n:
        raise IndexError(f"cut {cut} outside (0, {n})")
    st = state if state.canonical_center == cut else canonicalize(state, cut)
    t = st.site_tensors[cut]
    s = np.linalg.svd(t.reshape(t.shape[0], -1), compute_uv=False)
    s = s / np.linalg.norm(s)
    return SchmidtSpectrum(cut, s)


def entanglement_entropy(state: MatrixProductState, cut: int) -> float:
    """Von Neumann entropy (natural log) across ``cut``."""
    p = schmidt_spectrum(state, cut).values ** 2
    p = p[p > 1e-300]
    return float(-np.sum(p * np.log(p)))


def expectation_local(state: MatrixProductState, ops: dict[int, NDArray]) -> complex:
    """<psi| prod_j ops[j] |psi> / <psi|psi> for a product of local operators."""
    env = np.ones((1, 1), dtype=np.complex128)
    nrm = np.ones((1, 1), dtype=np.complex128)
    for j, a in enumerate(state.site_tensors):
        env = _transfer_op(env, a, ops[j]) if j in ops else _transfer_identity(env, a)
        nrm = _transfer_identity(nrm, a)
        s = np.abs(nrm).max()
        env, nrm = env / s, nrm / s
    return complex(env[0, 0] / nrm[0, 0])


def expectation_pauli_string(state: MatrixProductState, string, support: Partition) -> complex:
    """<psi| P_support (x) I_rest |psi> for a Pauli string on ``support``.

    ``string`` is a :class:`~mpsmagic.pauli.PauliString` whose exponents are
    listed for ``support.sites`` in increasing order.
    """
    from .pauli import weyl_matrix

    support.check_within(state.num_sites)
    sites = support.sites
    if len(string) != len(sites):
        raise ValueError("string length does not match support size")
    d = state.local_dim
    ops = {j: weyl_matrix(d, a, ap) for j, (a, ap) in zip(sites, string.exponents)}
    return expectation_local(state, ops)


def reduced_density_matrix(
    state: MatrixProductState, sites: Iterable[int] | Partition, max_dim: int = 4096
) -> NDArray[np.complex128]:
    """Dense rho on ``sites`` (first listed site most significant).

    Built from a purification P[k, y, r] (kept multi-index, ancilla, ket bond)
    so rho = P P^dagger; the ancilla only grows across traced gaps and is
    compressed by QR there.

    Raises:
        ContractionTooLargeError: if ``d^|sites|`` exceeds ``max_dim``.
    """
    keep = sites.sites if isinstance(sites, Partition) else sorted(set(int(j) for j in sites))
    if not keep:
        raise ValueError("need at least one site")
    if keep[0] < 0 or keep[-1] >= state.num_sites:
        raise IndexError("site outside the chain")
    d = state.local_dim
    if d ** len(keep) > max_dim:
        raise ContractionTooLargeError(f"reduced density matrix of dimension {d ** len(keep)} > {max_dim}")
    st = state if state.canonical_center == 0 else canonicalize(state, 0)
    env = np.ones((1, 1), dtype=np.complex128)
    for j in range(keep[0]):
        env = _transfer_identity(env, st.site_tensors[j])
    # env = Y Y^dagger (bra, ket); the ket side of Y^T starts the purification
    w, v = np.linalg.eigh(0.5 * (env + env.conj().T))
    pos = w > 1e-15 * max(w.max(), 1e-300)
    y = v[:, pos] * np.sqrt(w[pos])
    p = y.T.conj()[None]  # (k=1, y, r)
    keep_set = set(keep)
    for j in range(keep[0], keep[-1] + 1):
        a = st.site_tensors[j]
        k, ny, _ = p.shape
        x = np.tensordot(p, a, axes=(2, 0))  # (k, y, s, r')
        if j in keep_set:
            p = x.transpose(0, 2, 1, 3).reshape(k * d, ny, -1)
        else:
            m = x.reshape(k, ny * d, -1).transpose(0, 2, 1).reshape(-1, ny * d)
            # compress the ancilla: m = l q with q orthonormal rows
            q, r = np.linalg.qr(m.conj().T)
            p = r.conj().T.reshape(k, -1, r.shape[0]).transpose(0, 2, 1)
    k = p.shape[0]
    m = p.reshape(k, -1)
    rho = m @ m.conj().T
    return rho / np.trace(rho).real


def renyi2_entropy_exact(
    state: MatrixProductState, partition: Partition, max_chi: int = 64
) -> float:
    """S_2 = -log Tr(rho_A^2) by a two-replica (swap) contraction.

    Cost is O(N d chi^5) with an environment of chi^4 entries; works for any
    set of blocks, connected or not.

    Raises:
        ContractionTooLargeError: if the maximal bond exceeds ``max_chi``.
    """
    partition.check_within(state.num_sites)
    if state.max_bond > max_chi:
        raise ContractionTooLargeError(f"contraction too large: chi={state.max_bond} > {max_chi}")
    inside = set(partition.sites)
    # env[k1, b1, k2, b2]: ket/bra bonds of replica 1 and 2
    env = np.ones((1, 1, 1, 1), dtype=np.complex128)
    nrm = np.ones((1, 1), dtype=np.complex128)
    log_scale = 0.0
    for j, a in enumerate(state.site_tensors):
        ac = a.conj()
        # ket 1 and ket 2
        x = np.tensordot(env, a, axes=(0, 0))  # (b1, k2, b2, s, k1')
        x = np.tensordot(x, a, axes=(1, 0))  # (b1, b2, s, k1', t, k2')
        if j in inside:
            # bra 1 carries t, bra 2 carries s
            x = np.tensordot(x, ac, axes=([0, 4], [0, 1]))  # (b2, s, k1', k2', b1')
            x = np.tensordot(x, ac, axes=([0, 1], [0, 1]))  # (k1', k2', b1', b2')
        else:
            x = np.tensordot(x, ac, axes=([0, 2], [0, 1]))  # (b2, k1', t, k2', b1')
            x = np.tensordot(x, ac, axes=([0, 2], [0, 1]))  # (k1', k2', b1', b2')
        env = x.transpose(0, 2, 1, 3)
        nrm = _transfer_identity(nrm, a)
        s = np.abs(env).max()
        env = env / s
        log_scale += np.log(s)
        sn = np.abs(nrm).max()
        nrm = nrm / sn
        log_scale -= 2.0 * np.log(sn)
    purity = env.reshape(-1)[0].real / nrm[0, 0].real ** 2
    return float(-(np.log(purity) + log_scale))


def mutual_info_renyi2_exact(
    state: MatrixProductState, a: Partition, b: Partition, max_chi: int = 64
) -> float:
    """S_2(A) + S_2(B) - S_2(AB)."""
    if a.overlaps(b):
        raise ValueError("partitions overlap")
    return (
        renyi2_entropy_exact(state, a, max_chi)
        + renyi2_entropy_exact(state, b, max_chi)
        - renyi2_entropy_exact(state, a.union(b), max_chi)
    )
