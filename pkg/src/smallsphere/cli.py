"""Command-line front end: ``smallsphere {density,sample,fit,test,simulate}``.

Exit status 0 on success, 2 on usage or input errors, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import estimation as est
from . import inference, simulation
from .densities import BM, IMS1, IMS2, MS2, S1, S2, VMF, UnsupportedModelError
from .samplers import make_rng, sample_model
from .saddlepoint import SaddlepointError
from .sphere import PoleError, frame, unit

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
MODELS = ("vmf", "bm", "s1", "s2", "ims1", "ims2", "ms2")
HYPOTHESES = ("association", "axis", "greatsphere", "vmf", "bm")


class UsageError(ValueError):
    pass


def _floats(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def build_params(args):
    """Model parameters from the flags; modes sit at azimuth 0 in the frame of mu0."""
    model = args.model.lower()
    mu0 = unit(_floats(args.mu0) or [0.0, 0.0, 1.0])
    p = mu0.shape[0]
    nus = _floats(args.nu) or [0.5]
    K = len(nus)
    k0 = _floats(args.kappa0) or [10.0]
    k1 = _floats(args.kappa1) or [1.0]
    k0 = k0 * K if len(k0) == 1 else k0
    k1 = k1 * K if len(k1) == 1 else k1
    if len(k0) != K or len(k1) != K:
        raise UsageError("--kappa0/--kappa1 need one value or one per --nu entry")
    E = frame(mu0)
    mu1 = np.array([v * mu0 + math.sqrt(1.0 - v * v) * E[:, 1] for v in nus])
    if model == "vmf":
        return VMF(mu0, k1[0])
    if model == "bm":
        return BM(mu0, k0[0], nus[0])
    if model in ("s1", "s2"):
        if K != 1:
            raise UsageError(f"{model} takes a single --nu")
        return (S1 if model == "s1" else S2)(mu0, mu1[0], k0[0], k1[0])
    if model in ("ims1", "ims2"):
        return (IMS1 if model == "ims1" else IMS2)(mu0, mu1, np.array(k0), np.array(k1))
    lam_vals = _floats(args.lam) or [0.0] * (K * (K - 1) // 2)
    if len(lam_vals) != K * (K - 1) // 2:
        raise UsageError("--lambda needs K(K-1)/2 values (upper triangle, row-major)")
    lam = np.zeros((K, K))
    lam[np.triu_indices(K, 1)] = lam_vals
    return MS2(mu0, mu1, np.array(k0), np.array(k1), lam + lam.T)


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _grid(text: str) -> tuple[int, int]:
    try:
        if "x" in text:
            a, b = text.lower().split("x")
            return int(a), int(b)
        n = int(text)
        return n, 2 * n
    except ValueError as exc:
        raise UsageError(f"--grid must be N or NLATxNLON, got {text!r}") from exc


def cmd_density(args) -> int:
    params = build_params(args)
    if params.mu0.shape[0] != 3 or isinstance(params, (IMS1,)):
        raise UsageError("density grids are for univariate models on S^2")
    n_lat, n_lon = _grid(args.grid)
    lat, lon, log_f, area = simulation.density_grid(params, n_lat, n_lon)
    lines = ["lat,lon,log_density,cell_area"]
    for a, b, f, w in zip(lat.ravel(), lon.ravel(), log_f.ravel(), area.ravel()):
        lines.append(f"{a:.17g},{b:.17g},{f:.17g},{w:.17g}")
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_sample(args) -> int:
    if not args.out:
        raise UsageError("sample needs --out")
    params = build_params(args)
    X = sample_model(make_rng(args.seed), params, args.n)
    simulation.write_dataset(args.out, X)
    return EXIT_OK


def _load(args) -> np.ndarray:
    if not args.data:
        raise UsageError("--data is required")
    return simulation.read_dataset(args.data)


def cmd_fit(args) -> int:
    X = _load(args)
    res = est.fit_model(args.model, X, est.FitOptions())
    _write(json.dumps(res.to_json_dict(), indent=2) + "\n", args.out)
    return EXIT_OK


def _default_alternative(hyp: str, X: np.ndarray) -> str:
    if X.ndim == 3:
        return "MS2" if X.shape[2] == 3 else "IMS2"
    return "S1" if hyp in ("vmf", "bm") else "S2"


def cmd_test(args) -> int:
    X = _load(args)
    hyp_name = args.hypothesis.lower()
    model = args.model if args.model_given else _default_alternative(hyp_name, X)
    star = _floats(args.mu0_star)
    hyp = inference.Hypothesis(hyp_name, model, None if star is None else np.array(star))
    res = inference.lr_test(hyp, X, est.FitOptions())
    out = res.to_json_dict()
    out["model"] = hyp.model
    out["alpha"] = args.alpha
    out["reject"] = bool(res.p_value < args.alpha)
    _write(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def _scenario_from_config(cfg: dict, args) -> simulation.Scenario:
    ns = argparse.Namespace(
        model=cfg.get("model", "s2"),
        mu0=",".join(map(str, cfg["mu0"])) if "mu0" in cfg else None,
        nu=",".join(map(str, np.atleast_1d(cfg.get("nu", 0.5)))),
        kappa0=",".join(map(str, np.atleast_1d(cfg.get("kappa0", 10.0)))),
        kappa1=",".join(map(str, np.atleast_1d(cfg.get("kappa1", 1.0)))),
        lam=",".join(map(str, np.atleast_1d(cfg["lambda"]))) if "lambda" in cfg else None,
    )
    params = build_params(ns)
    return simulation.Scenario(
        name=str(cfg.get("name", "scenario")),
        params=params,
        n=int(cfg.get("n", args.n)),
        replicates=int(cfg.get("replicates", args.reps or 100)),
        seed=int(cfg.get("seed", args.seed)),
        estimators=tuple(e.upper() for e in cfg.get("estimators", ["S2"])),
    )


def cmd_simulate(args) -> int:
    reps = args.reps
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        sc = _scenario_from_config(cfg, args)
        errs = simulation.run_scenario(sc)
        cells = {e: {sc.name: simulation.mean_sd(v)} for e, v in errs.items()}
        meta = {"scenario": sc.name, "replicates": sc.replicates, "n": sc.n, "seed": sc.seed}
        report = simulation.TableReport(sc.name, [sc.name], cells, meta, errs)
    elif args.table == "2":
        report = simulation.run_table2(reps=reps or 100, n=args.n, seed=args.seed)
    elif args.table == "3":
        report = simulation.run_table3(reps=reps or 100, n=args.n, seed=args.seed)
    elif args.table == "4":
        report = simulation.run_table4(reps=reps or 100, seed=args.seed)
    elif args.table == "power":
        report = simulation.run_power_study(reps=reps or 200, n=args.n, alpha=args.alpha, seed=args.seed)
    else:
        raise UsageError("simulate needs --config or --table")
    _write(report.to_csv(), args.out)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smallsphere", description="Small-sphere distributions: densities, sampling, fitting, tests.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_flags(p, default="s2"):
        p.add_argument("--model", default=default, type=str.lower, choices=MODELS)
        p.add_argument("--mu0", help="axis, comma-separated (default 0,0,1)")
        p.add_argument("--nu", help="latitude cosine(s), one per marginal")
        p.add_argument("--kappa0", help="vertical concentration(s)")
        p.add_argument("--kappa1", help="horizontal concentration(s)")
        p.add_argument("--lambda", dest="lam", help="MS2 association, upper triangle row-major")

    p = sub.add_parser("density", help="log-density grid over S^2")
    model_flags(p)
    p.add_argument("--grid", default="90", help="N (N x 2N cells) or NLATxNLON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("sample", help="draw a dataset")
    model_flags(p)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("fit", help="fit a model to a dataset")
    p.add_argument("--model", default="s2", type=str.lower, choices=MODELS)
    p.add_argument("--data")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="likelihood-ratio test")
    p.add_argument("--hypothesis", required=True, type=str.lower, choices=HYPOTHESES)
    p.add_argument("--model", type=str.lower, choices=MODELS[2:], help="alternative model")
    p.add_argument("--mu0-star", dest="mu0_star")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--data")
    p.add_argument("--out")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="run a scenario or reproduce a table")
    p.add_argument("--config")
    p.add_argument("--table", choices=("2", "3", "4", "power"))
    p.add_argument("--reps", type=int)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    if args.command == "test":
        args.model_given = args.model is not None
    try:
        return args.func(args)
    except (UsageError, simulation.DatasetError, inference.IncompatibleHypothesisError, UnsupportedModelError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (est.EstimationError, SaddlepointError, PoleError, FloatingPointError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
