"""Autocorrelation analysis and error bars for Markov-chain traces."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "ChainTrace",
    "ConstantTraceError",
    "autocovariance",
    "autocorr_function",
    "integrated_autocorr_time",
    "tau_uncertainty",
    "corrected_std_error",
    "blocked_jackknife",
    "write_autocorr_csv",
]

FFT_MIN_SAMPLES = 10_000


class ConstantTraceError(ValueError):
    """Raised when c_f(0) vanishes and rho_f is undefined."""


@dataclass(frozen=True)
class ChainTrace:
    values: NDArray[np.float64]
    label: str = ""

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("a trace needs at least two samples")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


def _values(trace) -> NDArray[np.float64]:
    if isinstance(trace, ChainTrace):
        return trace.values
    return ChainTrace(np.asarray(trace, dtype=float)).values


def autocovariance(trace, t_max: int, method: str = "auto") -> NDArray[np.float64]:
    """c_f(t) = 1/(N_S - t) sum_n (f_n - mu)(f_{n+t} - mu) for t = 0..t_max."""
    x = _values(trace)
    n = x.size
    if not 0 <= t_max < n:
        raise ValueError("need 0 <= t_max < N_S")
    y = x - x.mean()
    if method == "auto":
        method = "fft" if n >= FFT_MIN_SAMPLES else "direct"
    if method == "fft":
        size = 1 << int(np.ceil(np.log2(2 * n)))
        f = np.fft.rfft(y, size)
        raw = np.fft.irfft(f * np.conj(f), size)[: t_max + 1]
    elif method == "direct":
        raw = np.array([np.dot(y[: n - t], y[t:]) for t in range(t_max + 1)])
    else:
        raise ValueError(f"unknown method {method!r}")
    return raw / (n - np.arange(t_max + 1))


def autocorr_function(trace, t_max: int, method: str = "auto") -> NDArray[np.float64]:
    """Normalized autocorrelation rho_f(t) = c_f(t) / c_f(0)."""
    c = autocovariance(trace, t_max, method)
    scale = np.mean(np.abs(_values(trace))) if len(_values(trace)) else 0.0
    if c[0] <= (1e-14 * max(scale, 1e-300)) ** 2:
        raise ConstantTraceError("constant trace: c_f(0) = 0, autocorrelation undefined")
    return c / c[0]


def integrated_autocorr_time(trace, c: float = 5.0) -> tuple[float, int]:
    """Self-consistent windowed integrated time tau = 1 + 2 sum_{t=1}^{M} rho(t).

    The window M is the smallest value with M >= c * tau(M). Returns (tau, M).
    A constant trace has tau = 1 by convention.
    """
    x = _values(trace)
    n = x.size
    try:
        rho = autocorr_function(x, n - 1)
    except ConstantTraceError:
        return 1.0, 0
    taus = 1.0 + 2.0 * np.cumsum(rho[1:])
    m = np.arange(1, n)
    ok = np.flatnonzero(m >= c * taus)
    if ok.size == 0:
        warnings.warn("Sokal window criterion never satisfied; trace too short for tau", stacklevel=2)
        window = n - 1
    else:
        window = int(m[ok[0]])
    tau = float(taus[window - 1])
    if window > n / 50:
        warnings.warn(f"autocorrelation window {window} is not << N_S={n}", stacklevel=2)
    return max(tau, 1e-12), window


def tau_uncertainty(tau: float, window: int, n_samples: int) -> float:
    """Standard error of the windowed tau estimate, tau * sqrt(2(2M+1)/N_S)."""
    return float(tau * np.sqrt(2.0 * (2 * window + 1) / n_samples))


def corrected_std_error(trace, c: float = 5.0) -> float:
    """Standard error of the mean inflated by the integrated autocorrelation time."""
    x = _values(trace)
    tau, _ = integrated_autocorr_time(x, c)
    return float(x.std(ddof=1) * np.sqrt(max(tau, 1.0) / x.size))


def blocked_jackknife(
    columns: Sequence[NDArray], func: Callable[..., float], block: int = 1
) -> tuple[float, float]:
    """Jackknife error of ``func(mean_1, mean_2, ...)`` with contiguous blocks.

    ``block`` should be a few autocorrelation times so that blocks are nearly
    independent.
    """
    cols = [np.asarray(col, dtype=float) for col in columns]
    n = cols[0].size
    if any(col.size != n for col in cols):
        raise ValueError("columns must have equal length")
    block = max(1, int(block))
    n_blocks = n // block
    if n_blocks < 2:
        raise ValueError("need at least two jackknife blocks")
    used = n_blocks * block
    sums = [col[:used].reshape(n_blocks, block).sum(axis=1) for col in cols]
    totals = [s.sum() for s in sums]
    full = func(*[t / used for t in totals])
    loo = np.array([func(*[(t - s[k]) / (used - block) for t, s in zip(totals, sums)]) for k in range(n_blocks)])
    err = np.sqrt((n_blocks - 1) / n_blocks * np.sum((loo - loo.mean()) ** 2))
    return float(full), float(err)


def write_autocorr_csv(path: str | Path, rho: NDArray, label: str = "") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "t", "rho"])
        for t, r in enumerate(rho):
            w.writerow([label, t, repr(float(r))])
