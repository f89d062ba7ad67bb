"""Metropolis sampling of Pauli strings weighted by powers of |Tr(rho P)|.

Chains live on a support (a block pair A u B, or the full chain) and move by
multiplying the current string with Z_i^(+-1) or X_i^dagger X_j. The pair move
keeps sum_i a'_i fixed, so a chain started at the identity never leaves the
charge sector where a U(1)-symmetric state has nonzero expectations. States
without that symmetry use an extended kernel that adds single-site X and pair
moves with independent signs.

Expectation values are updated from cached left environments: the state is
kept right-canonical, so everything right of the last support site closes
with a trace, and gaps between support sites are precomputed transfer maps.
"""

from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .mps import MatrixProductState, Partition, _transfer_identity, canonicalize, expectation_pauli_string
from .pauli import PauliString, weyl_table
from .perfect import Estimate
from .stats import blocked_jackknife, integrated_autocorr_time

__all__ = [
    "MarkovConfig",
    "ChainState",
    "ChainResult",
    "propose_move",
    "move_distribution",
    "metropolis_step",
    "run_chain",
    "estimate_w",
    "estimate_mutual_info2",
    "estimate_long_range_magic",
    "estimate_sre_markov",
    "write_trace",
]

log = logging.getLogger(__name__)

# gap transfer maps are stored as chi^2 x chi^2 matrices up to this bond
_SUPEROP_MAX_BOND = 32


@dataclass(frozen=True)
class MarkovConfig:
    """Chain settings. ``burn_in``/``thinning`` default to 10 N and N steps."""

    weight_exponent: float = 4.0
    move_mix: float = 0.5
    burn_in: int | None = None
    thinning: int | None = None
    n_samples: int = 10_000
    seed: int | None = 0
    conserve_charge: bool = True
    recompute_every: int = 1000
    jackknife_window: float = 5.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.move_mix <= 1.0:
            raise ValueError("move_mix must lie in [0, 1]")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thinning is not None and self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.n_samples < 2:
            raise ValueError("need at least two samples")
        if self.weight_exponent <= 0:
            raise ValueError("weight_exponent must be positive")

    def resolved(self, num_sites: int) -> MarkovConfig:
        return replace(
            self,
            burn_in=10 * num_sites if self.burn_in is None else self.burn_in,
            thinning=num_sites if self.thinning is None else self.thinning,
        )


@dataclass(frozen=True)
class ChainState:
    string: PauliString
    log_magnitude: float  # log |Tr(rho P)|
    weight_exponent: float = 4.0

    @property
    def log_weight(self) -> float:
        return self.weight_exponent * self.log_magnitude

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight) if np.isfinite(self.log_weight) else 0.0


# ----------------------------------------------------------------------------
# proposals


def _move_table(size: int, d: int, config: MarkovConfig) -> list[tuple[float, str]]:
    """Move families and their probabilities on a support of ``size`` sites.

    The charge-conserving kernel uses single-site Z^(+-1) and pair X_i^dagger X_j.
    The extended kernel (``conserve_charge=False``) splits each family evenly
    between single-site and pair moves, for both Z and X, and draws the two
    exponent signs of a pair move independently.
    """
    pair = size >= 2
    if config.conserve_charge:
        if not pair:
            return [(1.0, "z1")]
        return [(config.move_mix, "z1"), (1.0 - config.move_mix, "x2")]
    if not pair:
        return [(config.move_mix, "z1"), (1.0 - config.move_mix, "x1")]
    pz, px = config.move_mix, 1.0 - config.move_mix
    return [(pz / 2, "z1"), (pz / 2, "z2"), (px / 2, "x1"), (px / 2, "x2")]


def _family_moves(kind: str, i: int, j: int, si: int, sj: int) -> list[tuple[int, int, int]]:
    if kind == "z1":
        return [(i, si, 0)]
    if kind == "x1":
        return [(i, 0, si)]
    if kind == "z2":
        return [(i, si, 0), (j, sj, 0)]
    return [(i, 0, si), (j, 0, sj)]


def _pair_signs(config: MarkovConfig, d: int) -> list[tuple[int, int]]:
    # charge conserving: X_i^dagger X_j only; extended: every sign pair
    if config.conserve_charge:
        return [(d - 1, 1)]
    return [(1, 1), (1, d - 1), (d - 1, 1), (d - 1, d - 1)]


def _draw_move(size: int, d: int, config: MarkovConfig, rng: np.random.Generator) -> list[tuple[int, int, int]]:
    """Changes as (position, delta_a, delta_a')."""
    table = _move_table(size, d, config)
    r = rng.random()
    kind = table[-1][1]
    for p, k in table:
        if r < p:
            kind = k
            break
        r -= p
    i = int(rng.integers(size))
    if kind in ("z1", "x1"):
        return _family_moves(kind, i, i, 1 if rng.random() < 0.5 else d - 1, 0)
    j = int(rng.integers(size - 1))
    j += j >= i
    signs = _pair_signs(config, d)
    si, sj = signs[int(rng.integers(len(signs)))] if len(signs) > 1 else signs[0]
    return _family_moves(kind, i, j, si, sj)


def _apply_changes(labels: NDArray, changes, d: int) -> dict[int, int]:
    out = {}
    for pos, da, dap in changes:
        cur = out.get(pos, int(labels[pos]))
        a, ap = divmod(cur, d)
        out[pos] = ((a + da) % d) * d + (ap + dap) % d
    return out


def _warn_single_site(size: int, config: MarkovConfig) -> None:
    if size == 1 and config.move_mix < 1.0 and config.conserve_charge:
        warnings.warn("support has one site: two-site moves disabled", stacklevel=3)


def propose_move(string: PauliString, config: MarkovConfig, rng: np.random.Generator) -> PauliString:
    """Candidate string from the symmetric proposal kernel."""
    size = len(string)
    if size == 0:
        raise ValueError("empty support")
    _warn_single_site(size, config)
    labels = np.array(string.labels)
    for pos, lab in _apply_changes(labels, _draw_move(size, string.d, config, rng), string.d).items():
        labels[pos] = lab
    return PauliString.from_labels(labels, string.d)


def move_distribution(string: PauliString, config: MarkovConfig) -> dict[PauliString, float]:
    """Exact law of :func:`propose_move` from ``string``."""
    size, d = len(string), string.d
    moves: list[tuple[float, list]] = []
    for p, kind in _move_table(size, d, config):
        if p == 0.0:
            continue
        if kind in ("z1", "x1"):
            for i in range(size):
                for sgn in (1, d - 1):
                    moves.append((p / (2 * size), _family_moves(kind, i, i, sgn, 0)))
        else:
            signs = _pair_signs(config, d)
            for i in range(size):
                for j in range(size):
                    if i != j:
                        for si, sj in signs:
                            moves.append((p / (size * (size - 1) * len(signs)), _family_moves(kind, i, j, si, sj)))
    labels = np.array(string.labels)
    out: dict[PauliString, float] = {}
    for p, ch in moves:
        new = labels.copy()
        for pos, lab in _apply_changes(labels, ch, d).items():
            new[pos] = lab
        key = PauliString.from_labels(new, d)
        out[key] = out.get(key, 0.0) + p
    return out


def metropolis_step(
    chain: ChainState,
    oracle: Callable[[PauliString], complex],
    config: MarkovConfig,
    rng: np.random.Generator,
) -> tuple[ChainState, bool]:
    """One Metropolis update with acceptance min(1, w'/w); returns (state, accepted)."""
    candidate = propose_move(chain.string, config, rng)
    mag = abs(oracle(candidate))
    if mag == 0.0:
        return chain, False
    new = ChainState(candidate, math.log(mag), chain.weight_exponent)
    diff = new.log_weight - chain.log_weight
    if diff >= 0 or rng.random() < math.exp(diff):
        return new, True
    return chain, False


# ----------------------------------------------------------------------------
# cached environments


class _SiteData:
    """Per-site matrices for the update env' = C_alpha @ (env A^t stacked over t)."""

    __slots__ = ("a_perm", "c")

    def __init__(self, a: NDArray, table: NDArray) -> None:
        chi_l, d, chi_r = a.shape
        self.a_perm = np.ascontiguousarray(a.transpose(1, 0, 2))  # (t, l, r)
        ac = a.conj()
        c = np.zeros((d * d, chi_r, d, chi_l), dtype=np.complex128)
        for alpha in range(d * d):
            ap = alpha % d
            for t in range(d):
                s = (t + ap) % d
                c[alpha, :, t, :] = table[alpha, s * d + t] * ac[:, s, :].T
        self.c = c.reshape(d * d, chi_r, d * chi_l)

    def apply(self, env: NDArray, alpha: int) -> NDArray:
        y = np.matmul(env, self.a_perm)  # (t, l, r)
        return self.c[alpha] @ y.reshape(-1, y.shape[2])


class _Gap:
    """Identity transfer over the sites strictly between two support sites."""

    def __init__(self, tensors: Sequence[NDArray]) -> None:
        self.tensors = list(tensors)
        self.superop: NDArray | None = None
        if self.tensors and max(max(t.shape[0], t.shape[2]) for t in self.tensors) <= _SUPEROP_MAX_BOND:
            chi = self.tensors[0].shape[0]
            m = np.eye(chi * chi, dtype=np.complex128)
            for t in self.tensors:
                s = np.einsum("asx,bsz->abxz", t.conj(), t).reshape(t.shape[0] ** 2, t.shape[2] ** 2)
                m = m @ s
            self.superop = m

    def __call__(self, env: NDArray) -> NDArray:
        if not self.tensors:
            return env
        if self.superop is not None:
            r = self.tensors[-1].shape[2]
            return (env.reshape(-1) @ self.superop).reshape(r, r)
        for t in self.tensors:
            env = _transfer_identity(env, t)
        return env


class _EnvChain:
    """Left environments of <psi| P_sites |psi> along an ordered site list."""

    def __init__(self, st: MatrixProductState, sites: Sequence[int], lid: Sequence[NDArray], data: dict[int, _SiteData]):
        self.sites = list(sites)
        self.start = lid[self.sites[0]]
        self.gaps = [_Gap([])] + [
            _Gap(st.site_tensors[p + 1 : q]) for p, q in zip(self.sites[:-1], self.sites[1:])
        ]
        self.data = [data[j] for j in self.sites]
        self.after: list[NDArray] = []

    def build(self, labels: Sequence[int]) -> None:
        self.after = self.sweep(labels, 0, None)

    def sweep(self, labels: Sequence[int], start: int, override: dict[int, int] | None) -> list[NDArray]:
        env = self.start if start == 0 else self.gaps[start](self.after[start - 1])
        out = []
        for k in range(start, len(self.sites)):
            if k > start:
                env = self.gaps[k](env)
            lab = labels[k] if override is None or k not in override else override[k]
            env = self.data[k].apply(env, lab)
            out.append(env)
        return out

    @staticmethod
    def value(env: NDArray) -> complex:
        return complex(np.trace(env))


class _Engine:
    """Tracks Tr(rho_AB P), Tr(rho_A P_A), Tr(rho_B P_B) for a current string."""

    def __init__(self, state: MatrixProductState, regions: Sequence[Sequence[int]]):
        st = state if state.canonical_center == 0 else canonicalize(state, 0)
        self.state = st
        self.d = st.local_dim
        table = weyl_table(self.d)
        self.regions = [sorted(r) for r in regions]
        self.support = sorted(set().union(*self.regions))
        lid = [np.ones((1, 1), dtype=np.complex128)]
        for j in range(self.support[-1]):
            lid.append(_transfer_identity(lid[-1], st.site_tensors[j]))
        data = {j: _SiteData(st.site_tensors[j], table) for j in self.support}
        self.full = _EnvChain(st, self.support, lid, data)
        self.pos = {j: k for k, j in enumerate(self.support)}
        self.sub: list[_EnvChain | None] = []
        self.prefix: list[int | None] = []
        if len(self.regions) > 1:
            for r in self.regions:
                # a region that precedes the rest reads its value off the full chain
                if r[-1] < min(min(o) for o in self.regions if o is not r):
                    self.sub.append(None)
                    self.prefix.append(len(r) - 1)
                else:
                    self.sub.append(_EnvChain(st, r, lid, data))
                    self.prefix.append(None)
            self.sub_pos = [{j: k for k, j in enumerate(r)} for r in self.regions]
        self.labels = np.zeros(len(self.support), dtype=np.int64)

    def reset(self, labels: NDArray) -> tuple[complex, ...]:
        self.labels = np.array(labels, dtype=np.int64)
        self.full.build(self.labels)
        for ch, r in zip(self.sub, self.regions):
            if ch is not None:
                ch.build([self.labels[self.pos[j]] for j in r])
        return self.values()

    def values(self, full_after=None, sub_after=None) -> tuple[complex, ...]:
        fa = self.full.after if full_after is None else full_after
        vals = [_EnvChain.value(fa[-1])]
        for i, (ch, pre) in enumerate(zip(self.sub, self.prefix)):
            if ch is None:
                vals.append(_EnvChain.value(fa[pre]))
            else:
                after = ch.after if sub_after is None or sub_after[i] is None else sub_after[i]
                vals.append(_EnvChain.value(after[-1]))
        return tuple(vals)

    def trial(self, changes: dict[int, int]):
        """Values after ``changes`` (support position -> label) without committing."""
        first = min(changes)
        new_tail = self.full.sweep(self.labels, first, changes)
        full_after = self.full.after[:first] + new_tail
        sub_after: list[list[NDArray] | None] = []
        for i, ch in enumerate(self.sub):
            if ch is None:
                sub_after.append(None)
                continue
            local = {self.sub_pos[i][self.support[p]]: lab for p, lab in changes.items() if self.support[p] in self.sub_pos[i]}
            if not local:
                sub_after.append(None)
                continue
            sub_labels = [self.labels[self.pos[j]] for j in self.regions[i]]
            k0 = min(local)
            sub_after.append(ch.after[:k0] + ch.sweep(sub_labels, k0, local))
        return self.values(full_after, sub_after), (changes, full_after, sub_after)

    def commit(self, token) -> None:
        changes, full_after, sub_after = token
        for p, lab in changes.items():
            self.labels[p] = lab
        self.full.after = full_after
        for ch, after in zip(self.sub, sub_after):
            if ch is not None and after is not None:
                ch.after = after

    def exact_values(self) -> tuple[complex, ...]:
        """From-scratch contraction, independent of the caches."""
        def ev(sites):
            string = PauliString.from_labels([self.labels[self.pos[j]] for j in sites], self.d)
            return expectation_pauli_string(self.state, string, Partition.from_sites(sites))

        vals = [ev(self.support)]
        if len(self.regions) > 1:
            vals += [ev(r) for r in self.regions]
        return tuple(vals)


# ----------------------------------------------------------------------------
# chains


@dataclass
class ChainResult:
    """Recorded samples: log|Tr| over the support and each region."""

    log_mags: NDArray[np.float64]  # (n_samples, 1 + n_regions)
    acceptance_rate: float
    config: MarkovConfig
    wall_time: float
    cache_resets: int = 0
    final_string: PauliString | None = None
    log_weights: NDArray[np.float64] = field(default_factory=lambda: np.empty(0))


def _log_abs(v: complex) -> float:
    a = abs(v)
    return math.log(a) if a > 0 else -math.inf


def run_chain(
    state: MatrixProductState,
    regions: Sequence[Sequence[int]],
    config: MarkovConfig,
) -> ChainResult:
    """Run one chain over the union of ``regions`` weighted by |Tr(rho P)|^w."""
    t0 = time.perf_counter()
    cfg = config.resolved(state.num_sites)
    rng = np.random.default_rng(cfg.seed)
    eng = _Engine(state, regions)
    size = len(eng.support)
    d = eng.d
    _warn_single_site(size, cfg)
    vals = eng.reset(np.zeros(size, dtype=np.int64))
    cur = [_log_abs(v) for v in vals]
    if not np.isfinite(cur[0]):
        raise ValueError("identity string has zero weight; state is not normalized")
    w_exp = cfg.weight_exponent
    total_steps = cfg.burn_in + cfg.n_samples * cfg.thinning
    out = np.empty((cfg.n_samples, len(cur)))
    accepted = 0
    resets = 0
    rec = 0
    for step in range(1, total_steps + 1):
        changes = _apply_changes(eng.labels, _draw_move(size, d, cfg, rng), d)
        new_vals, token = eng.trial(changes)
        lm = _log_abs(new_vals[0])
        if np.isfinite(lm):
            diff = w_exp * (lm - cur[0])
            if diff >= 0 or rng.random() < math.exp(diff):
                eng.commit(token)
                cur = [_log_abs(v) for v in new_vals]
                accepted += 1
        if step % cfg.recompute_every == 0:
            exact = eng.exact_values()
            cached = eng.values()
            if not all(abs(e - c) <= 1e-8 * max(abs(e), 1e-300) + 1e-14 for e, c in zip(exact, cached)):
                warnings.warn("cached expectation drifted from exact contraction; caches rebuilt", stacklevel=2)
                resets += 1
                eng.reset(eng.labels)
                cur = [_log_abs(v) for v in exact]
        if step > cfg.burn_in and (step - cfg.burn_in) % cfg.thinning == 0:
            out[rec] = cur
            rec += 1
    final = PauliString.from_labels(eng.labels, d)
    return ChainResult(out, accepted / total_steps, cfg, time.perf_counter() - t0, resets, final, w_exp * out[:, 0])


def _region_sites(x: Partition | Iterable[int]) -> list[int]:
    return x.sites if isinstance(x, Partition) else sorted(int(j) for j in x)


def _check_regions(state: MatrixProductState, a, b) -> tuple[list[int], list[int]]:
    sa, sb = _region_sites(a), _region_sites(b)
    if not sa or not sb:
        raise ValueError("regions must be nonempty")
    if set(sa) & set(sb):
        raise ValueError("partitions overlap")
    for j in sa + sb:
        if not 0 <= j < state.num_sites:
            raise IndexError(f"site {j} outside the chain")
    return sa, sb


def _ratio_estimate(log_f: NDArray, res: ChainResult) -> Estimate:
    """-log <f> with blocked-jackknife errors; f given as log values."""
    shift = float(np.max(log_f))
    f = np.exp(log_f - shift)
    tau, _ = integrated_autocorr_time(f) if np.ptp(f) > 0 else (1.0, 0)
    block = max(1, int(math.ceil(res.config.jackknife_window * tau)))
    block = min(block, f.size // 2)
    mean, err = blocked_jackknife([f], lambda m: -(math.log(m) + shift), block)
    return Estimate(mean, err, f.size, tau, res.acceptance_rate)


def estimate_w(state: MatrixProductState, a, b, config: MarkovConfig | None = None) -> Estimate:
    """W(rho_AB) from a chain weighted by |Tr(rho_AB P)|^4."""
    cfg = replace(config or MarkovConfig(), weight_exponent=4.0)
    sa, sb = _check_regions(state, a, b)
    res = run_chain(state, [sa, sb], cfg)
    lm = res.log_mags
    return _ratio_estimate(4.0 * (lm[:, 1] + lm[:, 2] - lm[:, 0]), res)


def estimate_mutual_info2(state: MatrixProductState, a, b, config: MarkovConfig | None = None) -> Estimate:
    """Renyi-2 mutual information from a chain weighted by |Tr(rho_AB P)|^2."""
    cfg = replace(config or MarkovConfig(), weight_exponent=2.0)
    sa, sb = _check_regions(state, a, b)
    res = run_chain(state, [sa, sb], cfg)
    lm = res.log_mags
    return _ratio_estimate(2.0 * (lm[:, 1] + lm[:, 2] - lm[:, 0]), res)


def estimate_long_range_magic(
    state: MatrixProductState, a, b, config: MarkovConfig | None = None
) -> tuple[Estimate, Estimate, Estimate]:
    """L = I - W from two independent chains; returns (L, I, W).

    The W chain uses ``seed + 1`` so the two chains are independent.
    """
    cfg = config or MarkovConfig()
    i2 = estimate_mutual_info2(state, a, b, cfg)
    seed_w = None if cfg.seed is None else cfg.seed + 1
    w = estimate_w(state, a, b, replace(cfg, seed=seed_w))
    lrm = Estimate(i2.mean - w.mean, math.hypot(i2.std_error, w.std_error), min(i2.n_samples, w.n_samples))
    return lrm, i2, w


def estimate_sre_markov(state: MatrixProductState, n: float, config: MarkovConfig | None = None) -> Estimate:
    """M_n over the full chain by sampling Xi_P with Metropolis moves."""
    if n < 0:
        raise ValueError("n must be >= 0")
    cfg = replace(config or MarkovConfig(), weight_exponent=2.0)
    res = run_chain(state, [list(range(state.num_sites))], cfg)
    offset = state.num_sites * math.log(state.local_dim)
    log_xi = 2.0 * res.log_mags[:, 0] - offset
    if math.isclose(n, 1.0):
        vals = -log_xi - offset
        tau, _ = integrated_autocorr_time(vals) if np.ptp(vals) > 0 else (1.0, 0)
        err = float(vals.std(ddof=1) * math.sqrt(max(tau, 1.0) / vals.size))
        return Estimate(float(vals.mean()), err, vals.size, tau, res.acceptance_rate)
    log_f = (n - 1.0) * log_xi
    est = _ratio_estimate(log_f, res)
    # -log<Xi^(n-1)> rescaled by 1/(n-1)
    return Estimate(est.mean / (n - 1.0) - offset, est.std_error / abs(n - 1.0), est.n_samples, est.tau, est.acceptance_rate)


def write_trace(path: str | Path, res: ChainResult, observable: NDArray | None = None) -> None:
    """CSV with columns step, log_weight, observable."""
    cfg = res.config
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "log_weight", "observable"])
        for k, lw in enumerate(res.log_weights):
            step = cfg.burn_in + (k + 1) * cfg.thinning
            obs = "" if observable is None else repr(float(observable[k]))
            w.writerow([step, repr(float(lw)), obs])
