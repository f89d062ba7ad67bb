"""Autoregressive (perfect) sampling of Pauli strings from an MPS.

For a right-canonical MPS, the marginal probability of a Pauli prefix
``alpha_1..alpha_j`` under Xi_P = |<psi|P|psi>|^2 / d^N is ``||E_j||_F^2 / d^j``,
where ``E_j`` is the chi x chi left environment of <psi|P_prefix|psi>. The right
isometries make the sum over every suffix collapse to a Frobenius norm, so a
full sample costs O(N d^2 chi^3) per string with only chi x chi objects kept.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from typing import Iterator, TextIO

import numpy as np
from numpy.typing import NDArray

from .mps import MatrixProductState, is_right_isometry
from .pauli import PauliString, weyl_table
from .stats import blocked_jackknife

__all__ = [
    "SampleRecord",
    "Estimate",
    "NotRightCanonicalError",
    "sample_pauli_string",
    "sample_pauli_strings",
    "estimate_sre",
    "sre_from_log_probs",
    "write_samples",
    "read_samples",
]

log = logging.getLogger(__name__)

# candidate-environment entries per batch; small enough to stay cache resident
_BATCH_ENTRIES = 6e5


class NotRightCanonicalError(ValueError):
    pass


@dataclass(frozen=True)
class SampleRecord:
    string: PauliString
    probability: float
    log_probability: float


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n_samples: int
    tau: float | None = None
    acceptance_rate: float | None = None

    def __post_init__(self) -> None:
        if not self.std_error >= 0:
            raise ValueError("std_error must be nonnegative")

    def as_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "n_samples": self.n_samples,
            "tau": self.tau,
            "acceptance_rate": self.acceptance_rate,
        }


def _check_right_canonical(state: MatrixProductState, tol: float = 1e-8) -> None:
    if state.canonical_center != 0:
        raise NotRightCanonicalError("requires right-canonical gauge")
    for t in state.site_tensors[1:]:
        if not is_right_isometry(t, tol):
            raise NotRightCanonicalError("requires right-canonical gauge")


def _site_step(env: NDArray, a: NDArray, ac_t: NDArray, comb: NDArray) -> NDArray:
    """All d^2 candidate environments for a batch.

    env: (S, l, l) with (bra, ket) bonds; a: (l, d, r); ac_t = conj(a) as (d*r, l).
    Returns (d^2, S, r, r) indexed by alpha = a*d + a'.
    """
    s_count, chi_l, _ = env.shape
    _, d, chi_r = a.shape
    x = np.matmul(env, a.reshape(chi_l, d * chi_r))  # (S, l_bra, t r_ket)
    g = np.matmul(ac_t, x)  # (S, s r_bra, t r_ket)
    g = g.reshape(s_count, d, chi_r, d, chi_r).transpose(1, 3, 0, 2, 4).reshape(d * d, -1)
    return (comb @ g).reshape(d * d, s_count, chi_r, chi_r)


def _sample_batch(state: MatrixProductState, uniforms: NDArray, comb: NDArray) -> tuple[NDArray, NDArray]:
    n = uniforms.shape[0]
    d = state.local_dim
    n_sites = state.num_sites
    labels = np.empty((n, n_sites), dtype=np.int64)
    log_p = np.zeros(n)
    env = np.ones((n, 1, 1), dtype=np.complex128)
    rows = np.arange(n)
    for j, a in enumerate(state.site_tensors):
        ac_t = np.ascontiguousarray(a.conj().reshape(a.shape[0], -1).T)
        cand = _site_step(env, a, ac_t, comb)
        flat = cand.reshape(d * d, n, -1)
        w = (flat.real**2 + flat.imag**2).sum(axis=2).T  # (S, d^2)
        total = w.sum(axis=1)
        if np.any(total <= 0):
            raise FloatingPointError("vanishing environment norm during sampling")
        p = w / total[:, None]
        cum = np.cumsum(p, axis=1)
        r = uniforms[:, j, None]
        choice = np.minimum((cum < r).sum(axis=1), d * d - 1)
        # numerical edge: never choose a zero-probability branch
        bad = p[rows, choice] == 0.0
        if np.any(bad):
            choice[bad] = np.argmax(p[bad], axis=1)
        labels[:, j] = choice
        log_p += np.log(p[rows, choice])
        env = cand[choice, rows] / np.sqrt(w[rows, choice])[:, None, None]
    return labels, log_p


def sample_pauli_strings(
    state: MatrixProductState,
    n_samples: int,
    rng: np.random.Generator | int | None = None,
    batch_size: int | None = None,
) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    """Draw ``n_samples`` strings exactly from Xi_P.

    Returns flat labels of shape ``(n_samples, N)`` (``alpha = a*d + a'``) and
    the log-probabilities ``log Xi_P`` of each sample.

    Raises:
        NotRightCanonicalError: unless the state is right-canonical (center 0).
    """
    _check_right_canonical(state)
    rng = np.random.default_rng(rng)
    d = state.local_dim
    comb = weyl_table(d)
    if batch_size is None:
        chi = state.max_bond
        batch_size = max(8, min(n_samples, int(_BATCH_ENTRIES // (d * d * chi * chi))))
    # drawn up front so that results do not depend on the batch size
    uniforms = rng.random((n_samples, state.num_sites))
    labels, logs = [], []
    for start in range(0, n_samples, batch_size):
        lab, lp = _sample_batch(state, uniforms[start : start + batch_size], comb)
        labels.append(lab)
        logs.append(lp)
    return np.concatenate(labels), np.concatenate(logs)


def sample_pauli_string(state: MatrixProductState, rng: np.random.Generator | int | None = None) -> SampleRecord:
    labels, logp = sample_pauli_strings(state, 1, rng)
    return SampleRecord(PauliString.from_labels(labels[0], state.local_dim), float(np.exp(logp[0])), float(logp[0]))


def sre_from_log_probs(log_xi: NDArray, n: float, num_sites: int, d: int) -> Estimate:
    """SRE estimate from samples of log Xi_P drawn from Xi_P."""
    log_xi = np.asarray(log_xi, dtype=float)
    s = log_xi.size
    offset = num_sites * np.log(d)
    if np.isclose(n, 1.0):
        vals = -log_xi
        return Estimate(float(vals.mean() - offset), float(vals.std(ddof=1) / np.sqrt(s)), s)
    # <Xi^(n-1)> in log space to avoid under/overflow
    shift = float(np.max((n - 1.0) * log_xi))
    vals = np.exp((n - 1.0) * log_xi - shift)

    def transform(m: float) -> float:
        return (np.log(m) + shift) / (1.0 - n) - offset

    mean, err = blocked_jackknife([vals], transform, block=max(1, s // 100))
    return Estimate(mean, err, s)


def estimate_sre(
    state: MatrixProductState, n: float, n_samples: int, rng: np.random.Generator | int | None = None
) -> Estimate:
    """M_n from perfect samples; Shannon form at n=1, log-mean form otherwise."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n_samples < 2:
        raise ValueError("need at least two samples")
    if not np.isclose(n, 1.0):
        warnings.warn("sample complexity of M_n with n != 1 grows exponentially with N", stacklevel=2)
    _, log_xi = sample_pauli_strings(state, n_samples, rng)
    return sre_from_log_probs(log_xi, n, state.num_sites, state.local_dim)


def write_samples(fh: TextIO, labels: NDArray, log_probs: NDArray, d: int) -> None:
    """One JSON record per line: {"exponents": [[a, a'], ...], "log_probability": x}."""
    for lab, lp in zip(labels, log_probs):
        exps = [list(divmod(int(x), d)) for x in lab]
        fh.write(json.dumps({"exponents": exps, "log_probability": float(lp)}) + "\n")


def read_samples(fh: TextIO, d: int) -> Iterator[SampleRecord]:
    for line in fh:
        if not line.strip():
            continue
        rec = json.loads(line)
        lp = float(rec["log_probability"])
        yield SampleRecord(PauliString(tuple(map(tuple, rec["exponents"])), d), float(np.exp(lp)), lp)
