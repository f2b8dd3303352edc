"""Command-line interface: ``gqlasso {fit,simulate,backtest,diagnose}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every artifact is written under ``--out``; existing files are left alone
unless ``--force`` is given.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import INTERVAL_LEVELS, BacktestPlan, run_expanding, score_ledger
from .data_io import RunConfig, load_design, parse_run_config
from .errors import DataError, GQLassoError, NumericalError, UsageError
from .estimators import Method, ModelFit, fit_method, predict_quantiles, write_coefficients_csv
from .metrics import (EvalReport, crossing_counts, interval_columns, interval_stats,
                      r2_insample, sign_error)

log = logging.getLogger("gqlasso")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


@dataclass
class CommandOutcome:
    exit_code: int = EXIT_OK
    artifacts_written: list = field(default_factory=list)
    summary: str = ""


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; route it to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.replace(" ", "").split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _str_list(text: str) -> tuple:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(t) for t in _str_list(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------------------
# shared plumbing


class _Output:
    """Collects artifact paths under ``--out`` and refuses silent overwrites."""

    def __init__(self, out, force: bool):
        self.root = Path(out)
        self.force = force
        self.written = []

    def claim(self, *names) -> list:
        paths = [self.root / n for n in names]
        clash = [str(p) for p in paths if p.exists()]
        if clash and not self.force:
            raise UsageError(f"refusing to overwrite {', '.join(clash)} (pass --force)")
        self.root.mkdir(parents=True, exist_ok=True)
        return paths

    def text(self, path: Path, content: str) -> Path:
        path.write_text(content, encoding="utf-8")
        return self.record(path)

    def json(self, path: Path, obj) -> Path:
        return self.text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def record(self, path: Path) -> Path:
        self.written.append(str(path))
        return path


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        n = args.threads
    else:
        env = os.environ.get("GQLASSO_THREADS")
        try:
            n = int(env) if env else os.cpu_count() or 1
        except ValueError:
            raise UsageError(f"GQLASSO_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise UsageError("--threads must be >= 1")
    # kernels run serially; the value is validated and recorded only
    return n


def _config(args, **overrides) -> RunConfig:
    cfg = parse_run_config(args.config) if getattr(args, "config", None) else RunConfig()
    changes = {k: v for k, v in overrides.items() if v is not None}
    if not changes:
        return cfg
    try:
        return dataclasses.replace(cfg, **changes)
    except TypeError as exc:
        raise UsageError(str(exc)) from None


def _pct(v) -> str:
    return "   nan" if v is None or v != v else f"{100 * v:7.3f}"


def heat_table(fit: ModelFit) -> str:
    """Text heat map of standardized coefficients: rows predictors, columns tau.

    ``.`` is an exact zero; ``+``/``-`` to ``+++``/``---`` mark thirds of the
    largest absolute predictor coefficient.
    """
    b = fit.std_coefficients[1:]
    names = fit.column_names[1:] if fit.column_names else [f"x{j}" for j in range(1, b.shape[0] + 1)]
    peak = float(np.max(np.abs(b))) if b.size else 0.0
    width = max([len(n) for n in names] + [9])
    head = " " * width + " " + " ".join(f"{t:>5g}" for t in fit.method.taus)
    lines = [head]
    for name, row in zip(names, b):
        cells = []
        for v in row:
            if v == 0.0 or peak == 0.0:
                cells.append(".")
            else:
                level = min(3, int(np.ceil(3 * abs(v) / peak)))
                cells.append(("+" if v > 0 else "-") * level)
        lines.append(f"{name:<{width}} " + " ".join(f"{c:>5}" for c in cells))
    return "\n".join(lines)


def insample_report(fit: ModelFit, data) -> EvalReport:
    pred = predict_quantiles(fit, data.x)
    taus = fit.taus
    rep = EvalReport(n_obs=data.n, taus=taus.tolist())
    rep.ncq, rep.pcq = crossing_counts(pred)
    rep.r2_mean = r2_insample(pred.mean(axis=1), data.y)
    rep.r2_per_tau = r2_insample(pred, data.y, taus).tolist()
    med = np.flatnonzero(np.isclose(taus, 0.5))
    rep.pes = sign_error(pred[:, med[0]] if med.size else pred.mean(axis=1), data.y)
    for level, (lo, hi) in INTERVAL_LEVELS.items():
        try:
            a, b = interval_columns(taus, lo, hi)
        except UsageError:
            continue
        rep.interval_stats[level] = interval_stats(pred[:, a], pred[:, b], data.y)
    return rep


def _path_rows(fit: ModelFit) -> list:
    """Tidy rows ``tau_set, lambda, mean_cv_loss, se_cv_loss, n_selected, chosen``."""
    results = fit.cv if isinstance(fit.cv, list) else [fit.cv]
    labels = [f"{t:g}" for t in fit.method.taus] if isinstance(fit.cv, list) else ["all"]
    rows = []
    for label, res in zip(labels, results):
        if res is None:
            rows.append([label, repr(float(np.mean(fit.lam))), "", "", len(fit.union_support), 1])
            continue
        for i, lam in enumerate(res.lambda_grid):
            nsel = int(np.sum(np.any(res.path.fits[i].coefficients[1:] != 0, axis=1)))
            rows.append([label, repr(float(lam)), repr(float(res.mean_cv_loss[i])),
                         repr(float(res.se_cv_loss[i])), nsel, int(i == res.index_min)])
    return rows


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> CommandOutcome:
    if args.lam is not None and args.cv_folds is not None:
        raise UsageError("--lambda and --cv-folds are mutually exclusive")
    cfg = _config(args, method=args.method, taus=args.taus, folds=args.cv_folds, seed=args.seed)
    args.stage = "output"
    out = _Output(args.out, args.force)
    coef_path, report_path, path_path = out.claim("coefficients.csv", "report.json", "lambda_path.csv")
    args.stage = "load"
    data, summary = load_design(args.data, cfg.prep_spec())
    if summary is not None:
        log.info("%s", summary.text())
    args.stage = "fit"
    fit = fit_method(cfg.method, data, cfg.taus, cfg.cv_settings(lam=args.lam))
    args.stage = "write"
    write_coefficients_csv(fit, out.record(coef_path))
    report = insample_report(fit, data)
    payload = report.to_dict()
    payload["lambda"] = np.asarray(fit.lam).tolist()
    payload["converged"] = fit.converged
    payload["provenance"] = fit.provenance
    out.json(report_path, payload)
    lines = ["tau_set,lambda,mean_cv_loss,se_cv_loss,n_selected,chosen"]
    lines += [",".join(str(c) for c in row) for row in _path_rows(fit)]
    out.text(path_path, "\n".join(lines) + "\n")
    text = "\n".join([
        f"{Method.parse(cfg.method).value} on {data.n} rows, {data.p} predictors",
        f"lambda: {np.round(np.asarray(fit.lam, dtype=float), 6).tolist()}",
        f"PCQ {_pct(report.pcq)}%   PES {_pct(report.pes)}%   R2(mean) {report.r2_mean:.3f}",
        heat_table(fit),
    ])
    return CommandOutcome(EXIT_OK, out.written, text)


def cmd_simulate(args) -> CommandOutcome:
    from .estimators import CvSettings
    from .experiments import SIM_TAUS, aggregate, run_replicates, write_aggregate_csv, write_records_csv
    from .simulate import SimScenario

    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    methods = [Method.parse(m).value for m in args.methods]
    taus = args.taus or SIM_TAUS
    cfg = _config(args, taus=taus, folds=_sim_folds(args), seed=args.seed)
    scenario = SimScenario(args.n, args.p, args.error, rho=args.rho)
    out = _Output(args.out, args.force)
    args.stage = "simulate"
    rec_path, agg_path = out.claim("replicates.csv", "aggregate.csv")
    records = run_replicates(scenario, methods, args.reps, cfg.seed, cfg.taus, cfg.cv_settings(),
                             progress=lambda d, t: log.info("replicate %d/%d", d, t))
    rows = aggregate(records)
    write_records_csv(records, out.record(rec_path))
    write_aggregate_csv(rows, out.record(agg_path))
    lines = [f"{scenario.error_kind.value} error, n={args.n}, p={args.p}, {args.reps} replicates",
             f"{'method':<10} {'stat':<5} {'ME':>9} {'NCQ':>9} {'FP':>9} {'FN':>9}"]
    for r in rows:
        lines.append(f"{r['method']:<10} {r['stat']:<5} {r['me']:9.3f} {r['ncq']:9.3f} "
                     f"{r['fp']:9.3f} {r['fn']:9.3f}")
    return CommandOutcome(EXIT_OK, out.written, "\n".join(lines))


def cmd_backtest(args) -> CommandOutcome:
    from .estimators import MethodSpec

    cfg = _config(args, method=args.method, taus=args.taus, eval_start=args.eval_start,
                  eval_end=args.eval_end, windows=args.windows, refit_every=args.refit_every,
                  folds=args.folds, seed=args.seed, min_train=args.min_train)
    if cfg.eval_start is None or cfg.eval_end is None:
        raise UsageError("--eval-start and --eval-end are required (flag or config)")
    plan = BacktestPlan(cfg.eval_start, cfg.eval_end, MethodSpec(cfg.method, cfg.taus),
                        cfg.cv_settings(), cfg.refit_every, cfg.windows, cfg.min_train)
    window_keys = ["full"] + [f"{a}-{b}" for a, b in plan.sub_windows]
    out = _Output(args.out, args.force)
    paths = out.claim("ledger.csv", *[f"report_{k}.json" for k in window_keys])
    args.stage = "load"
    data, summary = load_design(args.data, cfg.prep_spec())
    if data.stamps is None:
        raise DataError("backtest needs a stamped monthly table")
    if summary is not None:
        log.info("%s", summary.text())
    args.stage = "forecast"
    ledger = run_expanding(data, plan, progress=lambda d, t, s: log.info("forecast %d/%d (%s)", d, t, s))
    reports = score_ledger(ledger, plan.sub_windows)
    ledger.to_csv(out.record(paths[0]))
    for key, path in zip(window_keys, paths[1:]):
        out.json(path, reports[key].to_dict())
    lines = [f"{ledger.method}: {len(ledger)} forecasts {ledger.stamps[0]}-{ledger.stamps[-1]}",
             f"{'window':<14} {'R2oos':>7} {'PCQ%':>8} {'PES%':>8} {'CP80':>7} {'IL80':>9}"]
    for key in window_keys:
        r = reports[key]
        iv = r.interval_stats.get("80", {})
        cp = iv.get("coverage", float("nan"))
        il = iv.get("avg_length", float("nan"))
        r2 = "    nan" if r.r2_mean != r.r2_mean else f"{r.r2_mean:7.3f}"
        lines.append(f"{key:<14} {r2} {_pct(r.pcq):>8} {_pct(r.pes):>8} {cp:7.3f} {il:9.4f}")
    return CommandOutcome(EXIT_OK, out.written, "\n".join(lines))


def cmd_diagnose(args) -> CommandOutcome:
    from .diagnostics import cone_check, consistency_trend, oracle_lambda
    from .estimators import CvSettings, MethodSpec
    from .experiments import SIM_TAUS, replicate_seed
    from .design import AugmentedView
    from .simulate import SimScenario, generate, oracle_coefficients

    taus = args.taus or SIM_TAUS
    cfg = _config(args, taus=taus, folds=_sim_folds(args), seed=args.seed)
    scenario = SimScenario(args.n, args.p, args.error, rho=args.rho)
    out = _Output(args.out, args.force)
    args.stage = f"diagnose {args.check}"
    (report_path,) = out.claim(f"diagnose_{args.check}.json")
    report = {"check": args.check, "error": scenario.error_kind.value, "n": args.n, "p": args.p,
              "reps": args.reps, "seed": cfg.seed, "taus": list(cfg.taus)}
    if args.check == "consistency":
        medians = consistency_trend(scenario, args.ns, cfg.taus, args.reps, cfg.seed, cfg.cv_settings())
        vals = [medians[n] for n in args.ns]
        report.update(ns=list(args.ns), median_error=vals,
                      strictly_decreasing=bool(all(b < a for a, b in zip(vals, vals[1:]))))
        text = "\n".join(f"n={n:>6}  median ||b - b*|| = {v:.4f}" for n, v in zip(args.ns, vals))
    else:
        rows = []
        for r in range(args.reps):
            sc = scenario.with_seed(replicate_seed(cfg.seed, r))
            data = generate(sc)
            truth = oracle_coefficients(sc, cfg.taus)
            cap = oracle_lambda(data, truth)
            row = {"rep": r, "seed": sc.seed, "capital_lambda": cap}
            if args.check == "cone":
                if args.use_truth:
                    view = AugmentedView(data, len(cfg.taus))
                    std = view.scaler.to_standardized(truth.beta)
                    fit = ModelFit(MethodSpec("gq-lasso", cfg.taus), truth.beta, std, 2 * cap,
                                   view.scaler, data.column_names, True, 0.0)
                    lam = 2 * cap
                else:
                    lam = args.lambda_mult * cap
                    fit = fit_method("gq-lasso", data, cfg.taus, cfg.cv_settings(lam=lam))
                row.update(dataclasses.asdict(cone_check(fit, truth, lam, cap)))
            rows.append(row)
        report["replicates"] = rows
        caps = [r["capital_lambda"] for r in rows]
        report["capital_lambda_median"] = float(np.median(caps))
        if args.check == "cone":
            met = [r for r in rows if r["condition_met"]]
            rate = float(np.mean([r["cone_holds"] for r in met])) if met else None
            report.update(condition_met=len(met), cone_pass_rate=rate)
            text = f"cone holds in {rate if rate is None else f'{100 * rate:.1f}%'} of {len(met)} replicates with lambda >= 2 Lambda"
        else:
            text = f"median Lambda over {args.reps} replicates: {report['capital_lambda_median']:.5f}"
    out.json(report_path, report)
    return CommandOutcome(EXIT_OK, out.written, text)


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, out_required=True):
    p.add_argument("--out", required=out_required, help="directory for all artifacts")
    p.add_argument("--force", action="store_true", help="overwrite existing artifacts")
    p.add_argument("--seed", type=int, default=None, help="base random seed")
    p.add_argument("--config", default=None, help="key = value run configuration file")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: GQLASSO_THREADS or all cores)")
    p.add_argument("-v", "--verbose", action="store_true")


def _sim_folds(args):
    # simulations default to 5 folds unless a config file says otherwise
    if args.folds is not None:
        return args.folds
    return None if args.config else 5


def _scenario_flags(p: argparse.ArgumentParser, n=200, p_=20, reps=1):
    p.add_argument("--error", default="normal", choices=["normal", "t2", "hetero", "asym", "hetero-asym"])
    p.add_argument("--n", type=int, default=n)
    p.add_argument("--p", type=int, default=p_)
    p.add_argument("--rho", type=float, default=0.3)
    p.add_argument("--reps", type=int, default=reps)
    p.add_argument("--taus", type=_float_list, default=None)
    p.add_argument("--folds", type=int, default=None, help="CV folds (default 5)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gqlasso", description="Group-penalized multi-quantile regression.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit one method on a CSV and print a coefficient heat table")
    p.add_argument("--data", required=True)
    p.add_argument("--method", default=None, choices=[m.value for m in Method])
    p.add_argument("--taus", type=_float_list, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="fixed penalty (skips CV)")
    p.add_argument("--cv-folds", type=int, default=None)
    _common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="Monte Carlo replicates with ME/NCQ/FP/FN tables")
    _scenario_flags(p, reps=2)
    p.add_argument("--methods", type=_str_list, default=("gq-lasso", "rq-lasso", "gcqr"))
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("backtest", help="expanding-window one-step-ahead forecasts")
    p.add_argument("--data", required=True)
    p.add_argument("--method", default=None, choices=[m.value for m in Method])
    p.add_argument("--taus", type=_float_list, default=None)
    p.add_argument("--eval-start", default=None)
    p.add_argument("--eval-end", default=None)
    p.add_argument("--windows", type=_str_list, default=None, help="e.g. 196501-197212,197601-200712")
    p.add_argument("--refit-every", type=int, default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--min-train", type=int, default=None)
    _common(p)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("diagnose", help="oracle Lambda, cone and consistency checks")
    p.add_argument("--check", required=True, choices=["cone", "lambda", "consistency"])
    _scenario_flags(p, n=1000, reps=5)
    p.add_argument("--ns", type=_int_list, default=(200, 500, 1000))
    p.add_argument("--lambda-mult", type=float, default=2.0, help="cone check fits at this multiple of Lambda")
    p.add_argument("--use-truth", action="store_true", help="cone check on b_hat = b* (sanity fixture)")
    _common(p)
    p.set_defaults(func=cmd_diagnose)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, (DataError, OSError)):
        return EXIT_DATA
    if isinstance(exc, (NumericalError, FloatingPointError, np.linalg.LinAlgError)):
        return EXIT_NUMERICAL
    if isinstance(exc, ValueError):
        return EXIT_USAGE
    return EXIT_NUMERICAL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args.stage = "setup"
    try:
        args.threads = _threads(args)
        outcome = args.func(args)
    except (GQLassoError, OSError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        code = _exit_code(exc)
        kind = {EXIT_USAGE: "usage", EXIT_DATA: "data", EXIT_NUMERICAL: "numerical"}[code]
        print(f"gqlasso {args.command}: {kind} error during {args.stage}: {exc}", file=sys.stderr)
        return code
    print(outcome.summary)
    for path in outcome.artifacts_written:
        log.info("wrote %s", path)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
