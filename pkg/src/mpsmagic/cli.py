"""Experiment driver: configuration, orchestration, persistence and plots.

Configuration is a TOML file with optional sections::

    kind = "sre-vs-chi"
    sizes = [64]
    chis = [2, 4, 8, 16, 32]
    out = "results"

    [model]       preset = "haldane-large-d"  (or jz = ..., d = ...)
    [sampler]     method, n_samples, seed, thinning, burn_in, conserve_charge
    [partition]   scheme = "BC" | "AC" | "AD"
    [dmrg]        n_sweeps, cache
    [replica]     chi_p_factor, fit_min_chi
    [scan]        jz = [lo, hi], d = [lo, hi], points

Command-line flags override the file.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import platform
import subprocess
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .dmrg import DmrgSettings, dmrg_ground_state
from .io import load_mps, save_mps, write_dmrg_record
from .markov import MarkovConfig, estimate_long_range_magic, estimate_mutual_info2, estimate_sre_markov, run_chain
from .model import ModelParams, build_mpo, preset
from .mps import (
    MatrixProductState,
    Partition,
    entanglement_entropy,
    ghz_state,
    mutual_info_renyi2_exact,
    product_state,
    random_mps,
    to_dense,
)
from .pauli import QuditAlgebra, brute_force_long_range_magic, brute_force_sre
from .pauli_mps import long_range_magic_pauli_mps, reduced_pauli_mps, sre_replica
from .perfect import estimate_sre
from .stats import autocorr_function, integrated_autocorr_time, tau_uncertainty, write_autocorr_csv

__all__ = [
    "KINDS",
    "SCHEMES",
    "ConfigError",
    "SamplerSettings",
    "ExperimentConfig",
    "ResultRow",
    "ROW_FIELDS",
    "load_config",
    "partition_blocks",
    "fit_inverse_chi_squared",
    "ground_state",
    "run_experiment",
    "write_rows",
    "read_rows",
    "plot_results",
    "build_parser",
    "main",
]

log = logging.getLogger(__name__)

KINDS = ("phase-scan", "full-state-sre", "sre-vs-chi", "mutual-info", "long-range-magic", "autocorr", "oracle-check")
SCHEMES = ("BC", "AC", "AD")
METHODS = {
    "phase-scan": ("perfect", "markov"),
    "full-state-sre": ("perfect", "markov"),
    "sre-vs-chi": ("perfect", "markov"),
    "mutual-info": ("markov",),
    "long-range-magic": ("markov",),
    "autocorr": ("markov",),
    "oracle-check": ("perfect",),
}
VERBS = {
    "scan": "phase-scan",
    "sre": "sre-vs-chi",
    "mutual-info": "mutual-info",
    "lrm": "long-range-magic",
    "autocorr": "autocorr",
    "check": "oracle-check",
}
# dense oracles beyond this many sites are skipped
BRUTE_FORCE_MAX_SITES = 12
EXACT_LRM_MAX_SITES = 6
SWAP_TRICK_MAX_CHI = 64


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerSettings:
    method: str = "perfect"
    n_samples: int = 1000
    seed: int = 0
    thinning: int | None = None
    burn_in: int | None = None
    conserve_charge: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    sizes: tuple[int, ...]
    chis: tuple[int, ...]
    preset: str | None = "haldane-large-d"
    jz: float | None = None
    d_anisotropy: float | None = None
    sampler: SamplerSettings = field(default_factory=SamplerSettings)
    scheme: str = "BC"
    out_dir: str = "results"
    threads: int = 1
    n_sweeps: int = 10
    use_cache: bool = True
    chi_p_factor: int = 2
    fit_min_chi: int = 4
    scan_jz: tuple[float, float] = (-0.5, 3.0)
    scan_d: tuple[float, float] = (-1.0, 2.5)
    scan_points: int = 8

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.sizes or not self.chis:
            raise ConfigError("need at least one size and one bond dimension")
        if any(int(n) < 2 for n in self.sizes):
            raise ConfigError("sizes must be >= 2")
        if any(int(c) < 1 for c in self.chis):
            raise ConfigError("bond dimensions must be >= 1")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"partition scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.kind in ("mutual-info", "long-range-magic", "autocorr"):
            bad = [n for n in self.sizes if n % 4]
            if bad:
                raise ConfigError(f"partition blocks have length N/4; sizes {bad} are not multiples of 4")
        if self.sampler.method not in METHODS[self.kind]:
            raise ConfigError(f"method {self.sampler.method!r} not available for {self.kind}; use {METHODS[self.kind]}")
        if self.sampler.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.scan_points < 1:
            raise ConfigError("scan points must be >= 1")
        if self.kind != "oracle-check" and self.kind != "phase-scan":
            self.model_point()

    def model_point(self) -> tuple[float, float]:
        if self.jz is not None and self.d_anisotropy is not None:
            return float(self.jz), float(self.d_anisotropy)
        if self.preset is None:
            raise ConfigError("give either a preset or both jz and d")
        try:
            p = preset(self.preset)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        return p.jz, p.d_anisotropy

    def experiment_id(self) -> str:
        echo = self.as_dict()
        for key in ("out_dir", "threads", "use_cache"):
            echo.pop(key)
        digest = hashlib.sha1(json.dumps(echo, sort_keys=True).encode()).hexdigest()[:10]
        return f"{self.kind}-{digest}"

    def as_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> ExperimentConfig:
        data = dict(data)
        sections = {
            "model": {"preset", "jz", "d"},
            "sampler": {f.name for f in dataclasses.fields(SamplerSettings)},
            "partition": {"scheme"},
            "dmrg": {"n_sweeps", "cache"},
            "replica": {"chi_p_factor", "fit_min_chi"},
            "scan": {"jz", "d", "points"},
        }
        top = {"kind", "sizes", "chis", "out", "threads"}
        unknown = set(data) - top - set(sections)
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}")
        for name, allowed in sections.items():
            sec = data.get(name, {})
            if not isinstance(sec, dict):
                raise ConfigError(f"[{name}] must be a table")
            extra = set(sec) - allowed
            if extra:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
        if "kind" not in data:
            raise ConfigError("missing 'kind'")
        model = data.get("model", {})
        samp = data.get("sampler", {})
        dm = data.get("dmrg", {})
        rep = data.get("replica", {})
        scan = data.get("scan", {})
        kwargs: dict[str, Any] = {
            "kind": data["kind"],
            "sizes": tuple(int(n) for n in _as_list(data.get("sizes"), "sizes")),
            "chis": tuple(int(c) for c in _as_list(data.get("chis"), "chis")),
            "sampler": SamplerSettings(**samp),
            "scheme": data.get("partition", {}).get("scheme", "BC"),
        }
        if "jz" in model or "d" in model:
            kwargs.update(preset=None, jz=model.get("jz"), d_anisotropy=model.get("d"))
        if "preset" in model:
            kwargs["preset"] = model["preset"]
        optional = {
            "out_dir": data.get("out"),
            "threads": data.get("threads"),
            "n_sweeps": dm.get("n_sweeps"),
            "use_cache": dm.get("cache"),
            "chi_p_factor": rep.get("chi_p_factor"),
            "fit_min_chi": rep.get("fit_min_chi"),
            "scan_jz": tuple(scan["jz"]) if "jz" in scan else None,
            "scan_d": tuple(scan["d"]) if "d" in scan else None,
            "scan_points": scan.get("points"),
        }
        kwargs.update({k: v for k, v in optional.items() if v is not None})
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def _as_list(value, name: str) -> list:
    if value is None:
        raise ConfigError(f"missing '{name}'")
    return list(value) if isinstance(value, (list, tuple)) else [value]


def load_config(path: str | Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class ResultRow:
    experiment_id: str
    params: str
    N: int
    chi: int
    method: str
    observable: str
    value: float
    std_error: float
    tau: float
    n_samples: int
    wall_time: float
    seed: int
    revision: str


ROW_FIELDS = tuple(f.name for f in dataclasses.fields(ResultRow))


def partition_blocks(num_sites: int, scheme: str) -> tuple[list[int], list[int]]:
    """Blocks of length N/4: BC connected in the bulk, AC and AD disconnected."""
    if num_sites % 4:
        raise ValueError("N must be a multiple of 4")
    q = num_sites // 4
    starts = {"BC": (q, 2 * q), "AC": (0, 2 * q), "AD": (0, 3 * q)}
    if scheme not in starts:
        raise ValueError(f"unknown scheme {scheme!r}")
    s1, s2 = starts[scheme]
    return list(range(s1, s1 + q)), list(range(s2, s2 + q))


def fit_inverse_chi_squared(rows: Iterable) -> tuple[float, float, float]:
    """Least squares of value against 1/chi^2; returns (m0, c, r_squared).

    Rows are ResultRows or (chi, value[, std_error]) tuples. Weighted by inverse
    variance when every point carries a positive error.
    """
    pts = []
    for r in rows:
        if isinstance(r, ResultRow):
            pts.append((r.chi, r.value, r.std_error))
        else:
            chi, val, *err = r
            pts.append((chi, val, err[0] if err else float("nan")))
    if len(pts) < 3:
        raise ValueError("fit needs at least three points")
    chi = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts], dtype=float)
    err = np.array([p[2] for p in pts], dtype=float)
    x = 1.0 / chi**2
    w = 1.0 / err**2 if np.all(np.isfinite(err)) and np.all(err > 0) else np.ones_like(y)
    design = np.column_stack([np.ones_like(x), x]) * np.sqrt(w)[:, None]
    coef, *_ = np.linalg.lstsq(design, y * np.sqrt(w), rcond=None)
    m0, c = (float(v) for v in coef)
    resid = y - (m0 + c * x)
    ybar = np.sum(w * y) / np.sum(w)
    ss_res = float(np.sum(w * resid**2))
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-24 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return m0, c, r2


def ground_state(
    num_sites: int,
    jz: float,
    d_anisotropy: float,
    chi: int,
    seed: int,
    n_sweeps: int = 10,
    cache_dir: str | Path | None = None,
) -> MatrixProductState:
    """DMRG ground state, cached on disk keyed by (params, chi, seed)."""
    params = ModelParams(num_sites, jz, d_anisotropy)
    path = None
    if cache_dir is not None:
        key = json.dumps([num_sites, repr(float(jz)), repr(float(d_anisotropy)), chi, seed, n_sweeps])
        name = hashlib.sha1(key.encode()).hexdigest()[:16]
        path = Path(cache_dir) / f"gs-{name}.mps"
        if path.exists():
            return load_mps(path)
    settings = DmrgSettings(chi_max=chi, n_sweeps=n_sweeps)
    res = dmrg_ground_state(build_mpo(params), settings, seed=seed)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        save_mps(tmp, res.state)
        tmp.replace(path)
        write_dmrg_record(Path(cache_dir) / "dmrg_runs.jsonl", params, res, chi, seed)
    return res.state


def _revision() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def _cell_seed(seed: int, num_sites: int) -> int:
    # shared across chi at fixed N: estimates at different chi use common random numbers
    return int(np.random.SeedSequence([seed, num_sites]).generate_state(1)[0])


@dataclass(frozen=True)
class _Cell:
    kind: str
    num_sites: int
    chi: int
    extra: tuple = ()


class _RowMaker:
    def __init__(self, cfg: ExperimentConfig, exp_id: str, revision: str, cell: _Cell, seed: int):
        self.cfg, self.exp_id, self.revision, self.cell, self.seed = cfg, exp_id, revision, cell, seed
        self.t0 = time.perf_counter()

    def __call__(self, method: str, observable: str, value: float, std_error: float = 0.0,
                 tau: float = float("nan"), n_samples: int = 0, **params) -> ResultRow:
        return ResultRow(
            self.exp_id,
            json.dumps(params, sort_keys=True),
            self.cell.num_sites,
            self.cell.chi,
            method,
            observable,
            float(value),
            float(std_error),
            float(tau) if tau is not None else float("nan"),
            int(n_samples),
            time.perf_counter() - self.t0,
            self.seed,
            self.revision,
        )


def _markov_config(cfg: ExperimentConfig, seed: int) -> MarkovConfig:
    s = cfg.sampler
    return MarkovConfig(
        n_samples=s.n_samples, seed=seed, thinning=s.thinning, burn_in=s.burn_in, conserve_charge=s.conserve_charge
    )


def _sre_m1(state: MatrixProductState, cfg: ExperimentConfig, seed: int):
    if cfg.sampler.method == "perfect":
        return estimate_sre(state, 1.0, cfg.sampler.n_samples, seed)
    return estimate_sre_markov(state, 1.0, _markov_config(cfg, seed))


def _run_cell(cfg: ExperimentConfig, exp_id: str, revision: str, cell: _Cell) -> list[ResultRow]:
    seed = _cell_seed(cfg.sampler.seed, cell.num_sites)
    row = _RowMaker(cfg, exp_id, revision, cell, seed)
    try:
        return _evaluate(cfg, cell, seed, row)
    except Exception as exc:  # recorded per row so the run continues
        log.error("cell %s failed: %s", cell, exc)
        return [row("error", "error", float("nan"), float("nan"), error=f"{type(exc).__name__}: {exc}",
                    traceback=traceback.format_exc(limit=3))]


def _evaluate(cfg: ExperimentConfig, cell: _Cell, seed: int, row: _RowMaker) -> list[ResultRow]:
    n, chi = cell.num_sites, cell.chi
    cache = Path(cfg.out_dir) / "cache" if cfg.use_cache else None
    rows: list[ResultRow] = []
    if cell.kind == "oracle-check":
        return _oracle_check(cfg, cell, seed, row)
    jz, dd = cell.extra if cell.kind == "phase-scan" else cfg.model_point()
    state = ground_state(n, jz, dd, chi, cfg.sampler.seed, cfg.n_sweeps, cache)
    point = {"jz": jz, "d": dd}
    method = cfg.sampler.method

    if cell.kind in ("phase-scan", "full-state-sre", "sre-vs-chi"):
        est = _sre_m1(state, cfg, seed)
        rows.append(row(method, "m1", est.mean / n, est.std_error / n, est.tau, est.n_samples, **point))
        if cell.kind == "full-state-sre":
            rows.append(row("schmidt", "S_half", entanglement_entropy(state, n // 2), **point))
        if cell.kind == "sre-vs-chi":
            chi_p = cfg.chi_p_factor * chi
            pm = reduced_pauli_mps(state, None, chi_p)
            res = sre_replica(pm, 2, "compressed", chi_p)
            rows.append(row("pauli-mps", "m2", res.value / n, 0.0, chi_P=chi_p,
                            truncation_weight=res.accumulated_truncation_weight, **point))
        return rows

    a, b = partition_blocks(n, cfg.scheme)
    part = {**point, "scheme": cfg.scheme, "A": a, "B": b}
    mc = _markov_config(cfg, seed)
    if cell.kind == "mutual-info":
        est = estimate_mutual_info2(state, a, b, mc)
        rows.append(row("markov", "I2", est.mean, est.std_error, est.tau, est.n_samples,
                        acceptance=est.acceptance_rate, **part))
        if state.max_bond <= SWAP_TRICK_MAX_CHI:
            exact = mutual_info_renyi2_exact(state, Partition.from_sites(a), Partition.from_sites(b), SWAP_TRICK_MAX_CHI)
            rows.append(row("swap-trick", "I2", exact, **part))
        return rows

    if cell.kind == "long-range-magic":
        lrm, i2, w = estimate_long_range_magic(state, a, b, mc)
        rows.append(row("markov", "L", lrm.mean, lrm.std_error, float("nan"), lrm.n_samples, **part))
        rows.append(row("markov", "I2", i2.mean, i2.std_error, i2.tau, i2.n_samples, **part))
        rows.append(row("markov", "W", w.mean, w.std_error, w.tau, w.n_samples, **part))
        if len(a) + len(b) <= EXACT_LRM_MAX_SITES:
            res = long_range_magic_pauli_mps(state, a, b)
            rows.append(row("pauli-mps", "L", res.value, **part))
        if n <= BRUTE_FORCE_MAX_SITES:
            rows.append(row("brute-force", "L", brute_force_long_range_magic(QuditAlgebra(3), state, a, b), **part))
        return rows

    if cell.kind == "autocorr":
        out = Path(cfg.out_dir)
        for name, power, chain_seed in (("I", 2.0, seed), ("W", 4.0, seed + 1)):
            res = run_chain(state, [a, b], dataclasses.replace(mc, weight_exponent=power, seed=chain_seed))
            lm = res.log_mags
            log_f = power * (lm[:, 1] + lm[:, 2] - lm[:, 0])
            f = np.exp(log_f - log_f.max())
            tau, window = integrated_autocorr_time(f)
            t_max = min(f.size - 1, max(10 * window, 50))
            rho = autocorr_function(f, t_max) if np.ptp(f) > 0 else np.ones(1)
            write_autocorr_csv(out / f"rho_{cfg.scheme}_N{n}_chi{chi}_{name}.csv", rho, f"{name} N={n}")
            rows.append(row("markov", f"tau_{name}", tau, tau_uncertainty(tau, window, f.size), tau, f.size,
                            window=window, acceptance=res.acceptance_rate, **part))
        return rows
    raise ConfigError(f"unhandled kind {cell.kind}")


def _oracle_check(cfg: ExperimentConfig, cell: _Cell, seed: int, row: _RowMaker) -> list[ResultRow]:
    n, chi = cell.num_sites, cell.chi
    if n > 6:
        raise ConfigError("oracle-check uses dense references and is capped at N=6")
    alg = QuditAlgebra(3)
    fixtures = {
        "random": random_mps(n, 3, chi, seed=cfg.sampler.seed),
        "ghz": ghz_state(n, 3),
        "product": product_state([np.eye(3)[0]] * n),
    }
    rows = []
    for name, st in fixtures.items():
        psi = to_dense(st)
        for k in (1, 2):
            ref = brute_force_sre(alg, psi, k)
            rows.append(row("brute-force", f"M{k}", ref, fixture=name))
            if k == 2:
                rep = sre_replica(reduced_pauli_mps(st), 2).value
                ok = abs(rep - ref) < 1e-9
                rows.append(row("pauli-mps", "M2", rep, fixture=name, reference=ref, passed=bool(ok)))
            else:
                est = estimate_sre(st, 1.0, cfg.sampler.n_samples, seed)
                ok = abs(est.mean - ref) <= 3 * est.std_error + 1e-10
                rows.append(row("perfect", "M1", est.mean, est.std_error, float("nan"), est.n_samples,
                                fixture=name, reference=ref, passed=bool(ok)))
    return rows


def _cells(cfg: ExperimentConfig) -> list[_Cell]:
    if cfg.kind == "phase-scan":
        jzs = np.linspace(*cfg.scan_jz, cfg.scan_points)
        ds = np.linspace(*cfg.scan_d, cfg.scan_points)
        return [
            _Cell(cfg.kind, n, chi, (round(float(jz), 12), round(float(d), 12)))
            for n in cfg.sizes
            for chi in cfg.chis
            for jz in jzs
            for d in ds
        ]
    return [_Cell(cfg.kind, n, chi) for n in cfg.sizes for chi in cfg.chis]


def _fit_rows(cfg: ExperimentConfig, rows: list[ResultRow], exp_id: str, revision: str) -> list[ResultRow]:
    out = []
    for n in cfg.sizes:
        for obs in ("m1", "m2"):
            pts = [r for r in rows if r.N == n and r.observable == obs and r.chi >= cfg.fit_min_chi]
            if len(pts) < 3:
                continue
            m0, c, r2 = fit_inverse_chi_squared(pts)
            params = json.dumps({"fit": "m0 + c/chi^2", "chis": [r.chi for r in pts]})
            for name, val in (("m0", m0), ("c", c), ("r_squared", r2)):
                out.append(ResultRow(exp_id, params, n, 0, "fit", f"{obs}_{name}", val, 0.0, float("nan"), 0, 0.0,
                                     cfg.sampler.seed, revision))
    return out


def run_experiment(config: ExperimentConfig) -> list[ResultRow]:
    """Evaluate every (N, chi) cell and write ``<id>.csv`` and ``<id>.json``."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exp_id = config.experiment_id()
    revision = _revision()
    cells = _cells(config)
    started = time.time()
    if config.threads > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            chunks = list(pool.map(_run_cell, [config] * len(cells), [exp_id] * len(cells),
                                   [revision] * len(cells), cells))
    else:
        chunks = [_run_cell(config, exp_id, revision, c) for c in cells]
    rows = [r for chunk in chunks for r in chunk]
    if config.kind == "sre-vs-chi":
        rows += _fit_rows(config, rows, exp_id, revision)
    csv_path = out / f"{exp_id}.csv"
    write_rows(csv_path, rows)
    manifest = {
        "experiment_id": exp_id,
        "config": config.as_dict(),
        "csv": csv_path.name,
        "rows": len(rows),
        "errors": sum(r.observable == "error" for r in rows),
        "started": started,
        "finished": time.time(),
        "environment": {
            "python": platform.python_version(),
            "platform": platform.platform(),
            "numpy": np.__version__,
            "package": __version__,
            "revision": revision,
        },
    }
    (out / f"{exp_id}.json").write_text(json.dumps(manifest, indent=2, default=list))
    return rows


def write_rows(path: str | Path, rows: Sequence[ResultRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ROW_FIELDS)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in dataclasses.astuple(r)])


def read_rows(path: str | Path) -> list[ResultRow]:
    types = {f.name: f.type for f in dataclasses.fields(ResultRow)}
    conv = {"int": int, "float": float, "str": str}
    with open(path, newline="") as fh:
        return [ResultRow(**{k: conv[types[k]](v) for k, v in rec.items()}) for rec in csv.DictReader(fh)]


def plot_results(out_dir: str | Path) -> list[Path]:
    """Static SVG figures, one per result CSV in ``out_dir``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    for path in sorted(Path(out_dir).glob("*.csv")):
        try:
            rows = read_rows(path)
        except (KeyError, TypeError, ValueError):
            continue
        rows = [r for r in rows if r.method not in ("fit", "error")]
        if not rows:
            continue
        kind = rows[0].experiment_id.rsplit("-", 1)[0]
        fig, ax = plt.subplots(figsize=(5, 4))
        if kind == "phase-scan":
            pts = [(json.loads(r.params)["jz"], json.loads(r.params)["d"], r.value) for r in rows]
            jz, d, m = (np.array(v) for v in zip(*pts))
            sc = ax.scatter(jz, d, c=m, s=120, marker="s")
            fig.colorbar(sc, ax=ax, label="m1")
            ax.set_xlabel("Jz")
            ax.set_ylabel("D")
        else:
            by_chi = kind in ("sre-vs-chi",)
            groups: dict[tuple[str, str], list[ResultRow]] = {}
            for r in rows:
                groups.setdefault((r.observable, r.method), []).append(r)
            for (obs, method), rs in sorted(groups.items()):
                rs = sorted(rs, key=lambda r: r.chi if by_chi else r.N)
                x = [1.0 / r.chi**2 if by_chi else r.N for r in rs]
                ax.errorbar(x, [r.value for r in rs], yerr=[r.std_error for r in rs], marker="o", label=f"{obs} ({method})")
            ax.set_xlabel("1/chi^2" if by_chi else "N")
            ax.legend(fontsize=7)
        ax.set_title(kind)
        fig.tight_layout()
        svg = path.with_suffix(".svg")
        fig.savefig(svg)
        plt.close(fig)
        written.append(svg)
    return written


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mpsmagic", description="Magic of spin-1 chain ground states from MPS.")
    p.add_argument("verb", choices=[*VERBS, "plot"])
    p.add_argument("--config", type=Path, help="TOML experiment file")
    p.add_argument("--preset", help="critical-point preset name")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker processes")
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("--chis", type=int, nargs="+")
    p.add_argument("--samples", type=int, help="samples per estimate")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--method", choices=("perfect", "markov"))
    p.add_argument("--kind", choices=KINDS, help="override the kind implied by the verb")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


_DEFAULTS = {
    "phase-scan": {"sizes": [32], "chis": [16], "sampler": {"n_samples": 1000}},
    "full-state-sre": {"sizes": [64], "chis": [16], "sampler": {"n_samples": 10000}},
    "sre-vs-chi": {"sizes": [64], "chis": [2, 4, 8, 16, 32], "sampler": {"n_samples": 10000}},
    "mutual-info": {"sizes": [16, 28, 40], "chis": [20], "sampler": {"method": "markov", "n_samples": 100000}},
    "long-range-magic": {"sizes": [12], "chis": [64], "sampler": {"method": "markov", "n_samples": 100000}},
    "autocorr": {"sizes": [16, 28, 40], "chis": [20], "sampler": {"method": "markov", "n_samples": 100000}},
    "oracle-check": {"sizes": [4], "chis": [4], "sampler": {"n_samples": 10000}},
}


def _merge(args: argparse.Namespace) -> ExperimentConfig:
    data: dict[str, Any] = load_config(args.config) if args.config else {}
    kind = args.kind or data.get("kind") or VERBS[args.verb]
    base = _DEFAULTS[kind]
    merged = {"kind": kind, "sizes": base["sizes"], "chis": base["chis"]}
    merged.update({k: v for k, v in data.items() if k != "kind"})
    sampler = {**base["sampler"], **data.get("sampler", {})}
    model = dict(data.get("model", {}))
    if args.preset:
        model = {"preset": args.preset}
    overrides = {"sizes": args.sizes, "chis": args.chis, "out": args.out, "threads": args.threads}
    merged.update({k: v for k, v in overrides.items() if v is not None})
    for key, val in (("seed", args.seed), ("n_samples", args.samples), ("method", args.method)):
        if val is not None:
            sampler[key] = val
    merged["sampler"] = sampler
    if model:
        merged["model"] = model
    if args.scheme:
        merged["partition"] = {"scheme": args.scheme}
    return ExperimentConfig.from_mapping(merged)


def _error_report(exc: BaseException, code: int) -> int:
    print(json.dumps({"status": "error", "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "plot":
            out = args.out or (load_config(args.config).get("out") if args.config else None) or "results"
            for svg in plot_results(out):
                print(svg)
            return 0
        cfg = _merge(args)
        rows = run_experiment(cfg)
    except ConfigError as exc:
        return _error_report(exc, 2)
    except Exception as exc:
        return _error_report(exc, 1)
    errors = [r for r in rows if r.observable == "error"]
    failed = [r for r in rows if json.loads(r.params).get("passed") is False]
    summary = {
        "status": "ok" if not errors and not failed else "failed",
        "experiment_id": cfg.experiment_id(),
        "rows": len(rows),
        "errors": len(errors),
        "failed_checks": len(failed),
        "out": str(Path(cfg.out_dir) / f"{cfg.experiment_id()}.csv"),
    }
    print(json.dumps(summary))
    return 0 if summary["status"] == "ok" else 1


if __name__ == "__main__":
    sys.exit(main())
