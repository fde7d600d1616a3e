"""Simulation harness: dataset I/O, the benchmark scenarios, table reports.

Every replicate draws from its own generator seeded by ``(seed, index)``,
so results do not depend on the order or process in which replicates run.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import estimation as est
from . import inference
from .densities import BM, MS2, S2, VMF, ModelParams, log_density
from .samplers import GibbsConfig, sample_model
from .sphere import SmallSphere, angular_product_error, unit

# dataset I/O ------------------------------------------------------------------------

UNIT_TOL = 1e-9


class DatasetError(ValueError):
    """Malformed dataset file."""


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for replicate ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _as_3d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        return X[:, None, :]
    if X.ndim != 3:
        raise ValueError("data must have shape (n, p) or (n, K, p)")
    return X


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_dataset(path, X) -> None:
    """CSV with header ``x{k}_{j}`` (1-based marginal k, coordinate j) plus a JSON sidecar."""
    X3 = _as_3d(X)
    n, K, p = X3.shape
    header = [f"x{k + 1}_{j + 1}" for k in range(K) for j in range(p)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in X3.reshape(n, K * p):
            w.writerow([format(float(v), ".17g") for v in row])
    sidecar_path(path).write_text(json.dumps({"p": p, "K": K, "n": n}))


def read_dataset(path) -> np.ndarray:
    """Read a dataset written by :func:`write_dataset`; returns (n, p) when K = 1."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DatasetError(str(exc)) from exc
    if not rows:
        raise DatasetError("empty dataset file")
    header, body = rows[0], rows[1:]
    meta = None
    if sidecar_path(path).exists():
        meta = json.loads(sidecar_path(path).read_text())
    if meta is not None:
        p, K = int(meta["p"]), int(meta["K"])
    else:
        K = len({h.split("_")[0] for h in header})
        p = len(header) // max(K, 1)
    if len(header) != K * p:
        raise DatasetError(f"header has {len(header)} columns, expected K*p = {K * p}")
    try:
        data = np.array([[float(v) for v in r] for r in body if r], dtype=float)
    except ValueError as exc:
        raise DatasetError(f"non-numeric entry: {exc}") from exc
    if data.size == 0:
        raise DatasetError("dataset has no rows")
    if data.shape[1] != K * p:
        raise DatasetError(f"rows have {data.shape[1]} values, expected {K * p}")
    if meta is not None and int(meta["n"]) != data.shape[0]:
        raise DatasetError(f"sidecar says n = {meta['n']} but the file has {data.shape[0]} rows")
    X3 = data.reshape(-1, K, p)
    norms = np.linalg.norm(X3, axis=2)
    bad = np.flatnonzero(np.any(np.abs(norms - 1.0) > UNIT_TOL, axis=1))
    if bad.size:
        raise DatasetError(f"row {int(bad[0])} is not unit norm (|x| = {norms[bad[0]].tolist()})")
    return X3[:, 0, :] if K == 1 else X3


# scenarios --------------------------------------------------------------------------

E3 = np.array([0.0, 0.0, 1.0])
TABLE2_NU = 0.5
TABLE2_SETTINGS = {"a": (10.0, 1.0), "b": (100.0, 1.0), "c": (100.0, 10.0), "d": (100.0, 0.0)}
TABLE3_NU = (0.5, -0.3)
# modes a quarter turn apart about the axis; modes at one azimuth leave the axis weakly identified
TABLE3_AZIMUTH = (0.0, 0.5 * math.pi)
TABLE3_SETTINGS = {
    "a": (10.0, 1.0, 0.0),
    "b": (100.0, 1.0, 0.0),
    "c": (100.0, 10.0, 0.0),
    "d": (10.0, 2.0, 1.5),
    "e": (100.0, 2.0, 1.5),
    "f": (100.0, 20.0, 15.0),
}
POWER_SETTINGS = {"vmf": None, "(20,10)": (20.0, 10.0), "(100,10)": (100.0, 10.0), "(100,1)": (100.0, 1.0)}


def _mode_at(nu: float, azimuth: float = 0.0) -> np.ndarray:
    """Mode direction at latitude cosine ``nu`` and the given azimuth about the axis e3."""
    r = math.sqrt(1.0 - nu * nu)
    return np.array([r * math.cos(azimuth), r * math.sin(azimuth), nu])


def table2_params(setting: str) -> ModelParams:
    k0, k1 = TABLE2_SETTINGS[setting]
    if k1 == 0:
        return BM(E3, k0, TABLE2_NU)
    return S2(E3, _mode_at(TABLE2_NU), k0, k1)


def table3_params(setting: str) -> MS2:
    k0, k1, lam = TABLE3_SETTINGS[setting]
    mu1 = np.array([_mode_at(v, a) for v, a in zip(TABLE3_NU, TABLE3_AZIMUTH)])
    return MS2(E3, mu1, np.full(2, k0), np.full(2, k1), np.array([[0.0, lam], [lam, 0.0]]))


def power_params(name: str) -> ModelParams:
    if POWER_SETTINGS[name] is None:
        return VMF(_mode_at(TABLE2_NU), 10.0)
    k0, k1 = POWER_SETTINGS[name]
    return S2(E3, _mode_at(TABLE2_NU), k0, k1)


@dataclass(frozen=True)
class Scenario:
    """A data-generating model with replicate count, sample size and seed."""

    name: str
    params: ModelParams
    n: int
    replicates: int
    seed: int
    estimators: tuple[str, ...]

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.n < 1:
            raise ValueError("n must be positive")
        bad = set(self.estimators) - {"S1", "S2", "IMS1", "IMS2", "MS2", "BM"}
        if bad:
            raise ValueError(f"unknown estimators {sorted(bad)}")

    @property
    def truth(self) -> SmallSphere:
        P = self.params
        return SmallSphere(P.mu if isinstance(P, BM) else P.mu0, P.nu)


def _fit_all(X, estimators: Sequence[str], opts: est.FitOptions) -> dict[str, est.FitResult]:
    """Fit each estimator; first-kind fits reuse the second-kind fit as a start."""
    out: dict[str, est.FitResult] = {}
    X3 = _as_3d(X)
    univariate = np.asarray(X).ndim == 2
    base_name = "S2" if univariate else "IMS2"
    base = None

    def second():
        nonlocal base
        if base is None:
            base = est.fit_s2(X, opts) if univariate else est.fit_ims2(X3, opts)
        return base

    for name in estimators:
        if name == base_name:
            out[name] = second()
        elif name in ("S1", "IMS1"):
            out[name] = (est.fit_s1 if univariate else est.fit_ims1)(X if univariate else X3, opts, start=second())
        elif name == "BM":
            out[name] = est.fit_bm(X if univariate else X3, opts, start=second())
        elif name == "MS2":
            out[name] = est.fit_ms2(X3, opts)
        else:
            out[name] = est.fit_model(name, X, opts)
    return out


def _error_replicate(args) -> dict[str, float]:
    scenario, index, opts = args
    rng = replicate_rng(scenario.seed, index)
    X = sample_model(rng, scenario.params, scenario.n)
    fits = _fit_all(X, scenario.estimators, opts)
    truth = scenario.truth
    return {k: angular_product_error(truth, SmallSphere(f.params.mu0, f.params.nu)) for k, f in fits.items()}


def _param_replicate(args) -> dict[str, list[float]]:
    scenario, index, opts = args
    rng = replicate_rng(scenario.seed, index)
    X = sample_model(rng, scenario.params, scenario.n)
    fits = _fit_all(X, scenario.estimators, opts)
    out = {}
    for k, f in fits.items():
        vals = list(np.atleast_1d(f.params.kappa1))
        if k == "MS2":
            vals.append(float(f.params.lam[0, 1]))
        out[k] = vals
    return out


def _run(fn: Callable, scenario: Scenario, opts: est.FitOptions, workers: int) -> list:
    jobs = [(scenario, i, opts) for i in range(scenario.replicates)]
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))  # map preserves replicate order


def run_scenario(scenario: Scenario, opts: est.FitOptions = est.FitOptions(), workers: int = 1) -> dict[str, np.ndarray]:
    """Angular product errors (degrees) per estimator, in replicate order."""
    reps = _run(_error_replicate, scenario, opts, workers)
    return {k: np.array([r[k] for r in reps]) for k in scenario.estimators}


# reports ----------------------------------------------------------------------------


def mean_sd(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return float(np.mean(v)), sd


@dataclass
class TableReport:
    """Rows of mean(sd) cells with the run metadata.

    ``cells[row][column] = (mean, sd)``; ``raw`` keeps the per-replicate
    values.  Rows listed in ``empty_rows`` are rendered blank.
    """

    title: str
    columns: list[str]
    cells: dict[str, dict[str, tuple[float, float]]]
    metadata: dict
    raw: dict = field(default_factory=dict, repr=False)
    empty_rows: tuple[str, ...] = ()

    def cell(self, row: str, column: str) -> tuple[float, float]:
        return self.cells[row][column]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.metadata.items():
            buf.write(f"# {k}: {json.dumps(v)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method"] + self.columns)
        for row, cols in self.cells.items():
            w.writerow([row] + [f"{cols[c][0]:.2f}({cols[c][1]:.2f})" if c in cols else "" for c in self.columns])
        for row in self.empty_rows:
            w.writerow([row] + [""] * len(self.columns))
        return buf.getvalue()


def run_table2(
    settings: Sequence[str] = ("a", "b", "c", "d"),
    reps: int = 100,
    n: int = 50,
    seed: int = 2024,
    estimators: Sequence[str] = ("S1", "S2", "BM"),
    opts: est.FitOptions = est.FitOptions(),
    workers: int = 1,
) -> TableReport:
    """Univariate small-circle errors for the S2/BM settings with nu = 0.5."""
    cells: dict = {e: {} for e in estimators}
    raw: dict = {}
    for j, s in enumerate(settings):
        sc = Scenario(f"table2-{s}", table2_params(s), n, reps, seed + 1000 * j, tuple(estimators))
        errs = run_scenario(sc, opts, workers)
        raw[s] = errs
        for e in estimators:
            cells[e][s] = mean_sd(errs[e])
    meta = {"table": 2, "replicates": reps, "n": n, "seed": seed, "settings": list(settings), "nu": TABLE2_NU}
    return TableReport("Table 2", list(settings), cells, meta, raw, empty_rows=("LS",))


def run_table3(
    settings: Sequence[str] = ("a", "b", "c", "d", "e", "f"),
    reps: int = 100,
    n: int = 50,
    seed: int = 2025,
    estimators: Sequence[str] = ("IMS1", "IMS2", "MS2", "BM"),
    opts: est.FitOptions = est.FitOptions(),
    workers: int = 1,
) -> TableReport:
    """Bivariate small-sphere errors, nu = (0.5, -0.3), modes at azimuths 0 and 90 degrees."""
    cells: dict = {e: {} for e in estimators}
    raw: dict = {}
    for j, s in enumerate(settings):
        sc = Scenario(f"table3-{s}", table3_params(s), n, reps, seed + 1000 * j, tuple(estimators))
        errs = run_scenario(sc, opts, workers)
        raw[s] = errs
        for e in estimators:
            cells[e][s] = mean_sd(errs[e])
    meta = {"table": 3, "replicates": reps, "n": n, "seed": seed, "settings": list(settings), "nu": list(TABLE3_NU)}
    return TableReport("Table 3", list(settings), cells, meta, raw, empty_rows=("LS",))


def run_table4(
    cases: Sequence[str] = ("c", "f"),
    ns: Sequence[int] = (50, 200),
    reps: int = 100,
    seed: int = 2026,
    opts: est.FitOptions = est.FitOptions(),
    workers: int = 1,
) -> TableReport:
    """Concentration and association estimates; rows are (n, method), columns (case, parameter)."""
    names = ("kappa11", "kappa12", "lambda12")
    columns = [f"{c}:{nm}" for c in cases for nm in names]
    cells: dict = {}
    raw: dict = {}
    for i, n in enumerate(ns):
        for j, c in enumerate(cases):
            sc = Scenario(f"table4-{c}-{n}", table3_params(c), n, reps, seed + 1000 * (len(cases) * i + j), ("IMS2", "MS2"))
            reps_out = _run(_param_replicate, sc, opts, workers)
            for m in ("IMS2", "MS2"):
                vals = np.array([r[m] for r in reps_out])
                raw[(n, c, m)] = vals
                row = cells.setdefault(f"n={n} {m}", {})
                for q in range(vals.shape[1]):
                    row[f"{c}:{names[q]}"] = mean_sd(vals[:, q])
    meta = {"table": 4, "replicates": reps, "n": list(ns), "seed": seed, "cases": list(cases)}
    return TableReport("Table 4", columns, cells, meta, raw)


@dataclass
class PowerReport:
    rates: dict[str, float]
    p_values: dict[str, np.ndarray]
    metadata: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.metadata.items():
            buf.write(f"# {k}: {json.dumps(v)}\n")
        buf.write("distribution,rejection_rate\n")
        for k, v in self.rates.items():
            buf.write(f"{k},{v:.3f}\n")
        return buf.getvalue()


def _power_replicate(args) -> float:
    name, seed, index, n, opts = args
    rng = replicate_rng(seed, index)
    X = sample_model(rng, power_params(name), n)
    hyp = inference.Hypothesis("VonMisesFisher", "S1")
    return inference.lr_test(hyp, X, opts).p_value


def run_power_study(
    distributions: Sequence[str] = ("vmf", "(20,10)", "(100,10)", "(100,1)"),
    reps: int = 200,
    n: int = 50,
    alpha: float = 0.05,
    seed: int = 2027,
    opts: est.FitOptions = est.FitOptions(),
    workers: int = 1,
) -> PowerReport:
    """Rejection rates of the vMF likelihood-ratio test (S1 alternative)."""
    rates, pvals = {}, {}
    for j, name in enumerate(distributions):
        jobs = [(name, seed + 1000 * j, i, n, opts) for i in range(reps)]
        if workers <= 1:
            pv = [_power_replicate(a) for a in jobs]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                pv = list(pool.map(_power_replicate, jobs))
        pvals[name] = np.array(pv)
        rates[name] = float(np.mean(pvals[name] < alpha))
    meta = {"replicates": reps, "n": n, "alpha": alpha, "seed": seed, "nu": TABLE2_NU}
    return PowerReport(rates, pvals, meta)


# density grids ----------------------------------------------------------------------


def density_grid(params: ModelParams, n_lat: int = 90, n_lon: int = 180, method: str = "quadrature"):
    """Log density on a latitude/longitude cell-centre mesh of S^2.

    Returns ``(lat, lon, log_f, cell_area)`` with arrays of shape
    ``(n_lat, n_lon)``; ``sum(exp(log_f) * cell_area)`` approximates 1.
    """
    lat_edges = np.linspace(-np.pi / 2, np.pi / 2, n_lat + 1)
    lon_edges = np.linspace(-np.pi, np.pi, n_lon + 1)
    lat = 0.5 * (lat_edges[:-1] + lat_edges[1:])
    lon = 0.5 * (lon_edges[:-1] + lon_edges[1:])
    LAT, LON = np.meshgrid(lat, lon, indexing="ij")
    pts = np.stack([np.cos(LAT) * np.cos(LON), np.cos(LAT) * np.sin(LON), np.sin(LAT)], axis=-1).reshape(-1, 3)
    log_f = np.asarray(log_density(params, pts, method=method)).reshape(n_lat, n_lon)
    band = np.diff(np.sin(lat_edges))[:, None] * np.diff(lon_edges)[None, :]
    return LAT, LON, log_f, band
