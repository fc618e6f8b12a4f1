"""Command-line entry point.

Subcommands: ``simulate``, ``fit``, ``diagnose``, ``baseline``, ``forecast``.
Settings may come from an INI file (``--config``); any flag given on the
command line overrides the file. Output goes to ``--out``, else to
``$MSMETR_OUTPUT_DIR``, else to ``./msmetr_out``.

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import FitReport, compare_methods, fit_lasso, fit_ols, mae, mse, write_reports
from .diagnostics import chain_summary, write_json, write_plot_data
from .io import (
    export_posterior_summary, load_dataset, load_truth, read_draws, write_dataset, write_draws,
    write_table,
)
from .prior import as_dict, benchmark_hyperparameters, default_hyperparameters
from .sampler import ChainConfig, run_chain, run_chains
from .simulation import gen_dataset, named_setting

log = logging.getLogger("msmetr")
OUTPUT_ENV = "MSMETR_OUTPUT_DIR"
SETTINGS = ("s1", "s2", "s3", "s4", "s1n", "s2n", "s3n", "s4n", "s1ms", "s2ms")


class UsageError(Exception):
    """Bad flags or configuration; maps to exit code 2."""


def _elicit_pair(tokens) -> tuple[float, float]:
    vals = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep or key.strip().upper() not in ("V", "AV"):
            raise UsageError(f"--elicit expects V=<value> AV=<value>, got {tok!r}")
        try:
            vals[key.strip().upper()] = float(val)
        except ValueError as exc:
            raise UsageError(f"--elicit value {val!r} is not a number") from exc
    if set(vals) != {"V", "AV"}:
        raise UsageError("--elicit needs both V and AV")
    return vals["V"], vals["AV"]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with default values for any flag")
    common.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./msmetr_out)")
    common.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    common.add_argument("-q", "--quiet", action="store_true", help="log warnings only")

    p = argparse.ArgumentParser(prog="msmetr", description="Markov-switching tensor regression")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", metavar="command")

    s = sub.add_parser("simulate", parents=[common], help="write a simulated dataset")
    s.add_argument("--setting", choices=SETTINGS, default="s1")
    s.add_argument("--T", type=int, default=None, help="number of time points")
    s.add_argument("--covariates", choices=("iid", "ar1"), default="iid")
    s.add_argument("--rho", type=float, default=0.5, help="AR(1) coefficient of covariates")

    f = sub.add_parser("fit", parents=[common], help="run the Gibbs sampler")
    f.add_argument("--data", help="dataset directory")
    f.add_argument("--D", type=int, default=3, help="PARAFAC rank")
    f.add_argument("--K", type=int, default=None, help="number of regimes (default: from truth, else 1)")
    f.add_argument("--iterations", type=int, default=3000)
    f.add_argument("--burn-in", type=int, default=1500)
    f.add_argument("--thin", type=int, default=5)
    f.add_argument("--scan-fraction", type=float, default=1.0)
    f.add_argument("--ident-rule", choices=("trace-order", "frobenius-order", "none"),
                   default="frobenius-order")
    f.add_argument("--ident-equation", type=int, default=0)
    f.add_argument("--collapsed-prior", choices=("exact", "diagonal"), default="exact")
    f.add_argument("--pilot-chains", type=int, default=8)
    f.add_argument("--pilot-iterations", type=int, default=100)
    f.add_argument("--prior", choices=("elicited", "benchmark", "robustness"), default="elicited")
    f.add_argument("--elicit", nargs=2, metavar=("V=v", "AV=av"),
                   help="variance targets for elicitation, e.g. V=1 AV=0.10")
    for name in ("alpha", "a_tau", "b_tau", "a_sigma", "b_sigma", "a_lambda", "b_lambda",
                 "sigma_mu_sq", "a_noise", "b_noise"):
        f.add_argument("--" + name.replace("_", "-"), type=float, default=None)
    f.add_argument("--chains", type=int, default=1, help="independent chains")
    f.add_argument("--processes", type=int, default=None, help="worker processes for --chains")
    f.add_argument("--holdout", type=int, default=0, help="final time points kept out of the fit")

    d = sub.add_parser("diagnose", parents=[common], help="summaries and plot data from saved draws")
    d.add_argument("--draws", help="directory written by fit")
    d.add_argument("--data", help="dataset directory (for truth-based scores)")
    d.add_argument("--max-lag", type=int, default=20)

    b = sub.add_parser("baseline", parents=[common], help="OLS and LASSO fits")
    b.add_argument("--data")
    b.add_argument("--test", type=int, default=0, help="held-out final time points")
    b.add_argument("--horizons", type=int, nargs="+", default=[1, 5])
    b.add_argument("--lasso-lambda", type=float, default=None, help="fixed penalty (default: CV)")

    c = sub.add_parser("forecast", parents=[common], help="score a fit against OLS and LASSO")
    c.add_argument("--data")
    c.add_argument("--draws", help="directory written by fit --holdout")
    c.add_argument("--test", type=int, default=None, help="held-out size (default: fit holdout)")
    c.add_argument("--horizons", type=int, nargs="+", default=[1, 5])
    c.add_argument("--lasso-lambda", type=float, default=None)
    c.add_argument("--tensor-draws", help="single-regime fit on the same window, scored as 'Tensor'")
    return p


def _apply_config(parser, argv) -> None:
    """Load ``--config`` values as defaults of the chosen subparser."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    path = Path(known.config)
    if not path.is_file():
        raise UsageError(f"config file {path} does not exist")
    cp = configparser.ConfigParser()
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise UsageError(f"invalid config file: {exc}") from exc
    cmd = next((a for a in argv if not a.startswith("-")), None)
    subparsers = parser._subparsers._group_actions[0].choices
    if cmd not in subparsers:
        return
    sp = subparsers[cmd]
    actions = {a.dest.lower(): a for a in sp._actions}   # config keys are case-folded
    values = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            low = key.replace("-", "_").lower()
            if low not in actions or low in ("help", "config"):
                raise UsageError(f"unknown config key {key!r} in [{section}]")
            act = actions[low]
            dest = act.dest
            try:
                if act.nargs in ("+", 2):
                    conv = act.type or str
                    values[dest] = [conv(v) for v in raw.replace(",", " ").split()]
                elif isinstance(act, argparse._StoreTrueAction):
                    values[dest] = cp.getboolean(section, key)
                else:
                    values[dest] = (act.type or str)(raw)
            except ValueError as exc:
                raise UsageError(f"config key {key!r}: bad value {raw!r}") from exc
            if act.choices is not None and values[dest] not in act.choices:
                raise UsageError(f"config key {key!r}: {raw!r} not in {sorted(act.choices)}")
    sp.set_defaults(**values)


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or "msmetr_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required")


# --- subcommands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    setting = named_setting(args.setting, covariates=args.covariates, T=args.T, rho=args.rho)
    data, truth = gen_dataset(setting, np.random.default_rng(args.seed))
    truth.update(seed=args.seed, T=setting.T, covariates=setting.covariate_kind, rho=setting.rho)
    out = write_dataset(data, _out_dir(args), truth)
    log.info("wrote %s (T=%d, N=%d, shape=%s)", out, data.T, data.N, data.shape(0))
    return 0


def _hyperparameters(args, D, M, K):
    overrides = {n: getattr(args, n) for n in ("alpha", "a_tau", "a_sigma", "a_lambda", "b_lambda",
                                               "sigma_mu_sq", "a_noise", "b_noise")
                 if getattr(args, n) is not None}
    if args.elicit:
        v, av = _elicit_pair(args.elicit)
        h = default_hyperparameters(D, M, K, v_target=v, av_target=av, **overrides)
    elif args.prior in ("benchmark", "robustness"):
        h = benchmark_hyperparameters(D, K, robustness=args.prior == "robustness")
        if M != 2:
            raise UsageError("the benchmark prior is defined for matrix covariates only")
        if overrides:
            h = h.with_(**overrides)
    else:
        h = default_hyperparameters(D, M, K, **overrides)
    explicit = {n: getattr(args, n) for n in ("b_tau", "b_sigma") if getattr(args, n) is not None}
    if explicit:
        h = h.with_(source="explicit", **explicit)
    if h.targets is not None:
        log.info("elicited b_tau=%.10g b_sigma=%.10g from V=%g AV=%g",
                 h.b_tau, h.b_sigma, h.targets[0], h.targets[1])
    else:
        log.info("prior b_tau=%.10g b_sigma=%.10g (%s)", h.b_tau, h.b_sigma, h.source)
    return h


def _flat_summary(summary: dict) -> list:
    rows = []
    for key in sorted(summary):
        val = summary[key]
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            rows.append([key, float(val)])
    for name in sorted(summary.get("series", {})):
        s = summary["series"][name]
        for stat in ("mean", "sd", "q05", "q50", "q95"):
            rows.append([f"{name}.{stat}", float(s[stat])])
    return rows


def _emit_diagnostics(draws, out: Path, truth, max_lag: int = 20) -> dict:
    summary = chain_summary(draws, truth)
    summary["hpd_crosses_diagonal"] = write_plot_data(draws, out, truth, max_lag=max_lag)
    write_json(summary, out / "summary.json")
    write_table(out / "summary.csv", ["quantity", "value"], _flat_summary(summary))
    export_posterior_summary(draws, out / "posterior_summary.csv")
    return summary


def _fit_truth(truth, T, K):
    if truth is None or len(np.atleast_1d(truth.get("mu", []))) != K:
        return None
    t = dict(truth)
    if t.get("path") is not None:
        t["path"] = np.asarray(t["path"])[:T]
    return t


def cmd_fit(args) -> int:
    _require(args, "data")
    data = load_dataset(args.data)
    truth = load_truth(args.data)
    if args.holdout:
        if not 0 <= args.holdout < data.T - 1:
            raise UsageError("--holdout must leave at least two training points")
        data = data.slice_time(0, data.T - args.holdout)
    K = args.K or (len(truth["mu"]) if truth is not None else 1)
    M = len(data.shape(0))
    hyper = _hyperparameters(args, args.D, M, K)
    try:
        cfg = ChainConfig(
            iterations=args.iterations, burn_in=args.burn_in, thin=args.thin, seed=args.seed,
            scan_fraction=args.scan_fraction, ident_rule=args.ident_rule,
            ident_equation=args.ident_equation, collapsed_prior=args.collapsed_prior,
            pilot_chains=args.pilot_chains, pilot_iterations=args.pilot_iterations,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.chains < 1:
        raise UsageError("--chains must be positive")
    out = _out_dir(args)
    if args.chains == 1:
        results = [run_chain(data, hyper, cfg)]
        dirs = [out]
    else:
        results = run_chains(data, hyper, cfg, args.chains, processes=args.processes or args.chains)
        dirs = [out / f"chain_{i}" for i in range(args.chains)]
    ftruth = _fit_truth(truth, data.T, K)
    for dr, d in zip(results, dirs):
        dr.meta.update(holdout=args.holdout, hyperparameters=as_dict(hyper))
        write_draws(dr, d)
        summary = _emit_diagnostics(dr, d, ftruth)
        log.info("%s: %d draws in %.1f s, outcome MSE %.4g%s", d, dr.n_draws, dr.seconds,
                 summary["outcome_mse_last"],
                 f", coefficient MSE {summary['coef_mse']:.4g}" if "coef_mse" in summary else "")
    return 0


def cmd_diagnose(args) -> int:
    _require(args, "draws")
    draws = read_draws(args.draws)
    truth = None
    if args.data:
        truth = _fit_truth(load_truth(args.data), draws.smoothed.shape[0], draws.mu.shape[2])
    out = Path(args.out) if args.out else Path(args.draws)
    out.mkdir(parents=True, exist_ok=True)
    _emit_diagnostics(draws, out, truth, args.max_lag)
    log.info("diagnostics written to %s", out)
    return 0


def cmd_baseline(args) -> int:
    _require(args, "data")
    data = load_dataset(args.data)
    rng = np.random.default_rng(args.seed)
    n_test = args.test
    if not 0 <= n_test < data.T - 1:
        raise UsageError("--test must leave at least two training points")
    cut = data.T - n_test
    y = data.responses
    reports = []
    for name in ("OLS", "LASSO"):
        preds = []
        for ell in range(data.N):
            X = data.flat(ell)
            if name == "OLS":
                Xd = np.column_stack([np.ones(data.T), X])
                preds.append(Xd @ fit_ols(y[:cut, ell], Xd[:cut]))
            else:
                preds.append(fit_lasso(y[:cut, ell], X[:cut], args.lasso_lambda, rng=rng).predict(X))
        pred = np.column_stack(preds)
        rep = FitReport(name, mse(pred[:cut], y[:cut]), mae(pred[:cut], y[:cut]))
        if n_test:
            for h in args.horizons:
                rep.out[h] = (mse(pred[cut:], y[cut:]), mae(pred[cut:], y[cut:]))
        reports.append(rep)
    out = _out_dir(args) / "baseline_report.csv"
    write_reports(reports, out, tuple(args.horizons))
    log.info("wrote %s", out)
    return 0


def cmd_forecast(args) -> int:
    _require(args, "data", "draws")
    data = load_dataset(args.data)
    draws = read_draws(args.draws)
    n_test = args.test if args.test is not None else int(draws.meta.get("holdout", 0))
    if n_test <= 0:
        raise UsageError("forecasting needs a held-out window: fit with --holdout or pass --test")
    if draws.smoothed.shape[0] != data.T - n_test:
        raise UsageError(f"draws cover {draws.smoothed.shape[0]} points, "
                         f"data minus test window has {data.T - n_test}")
    tensor = None
    if args.tensor_draws:
        tensor = read_draws(args.tensor_draws)
        if tensor.smoothed.shape[0] != draws.smoothed.shape[0]:
            raise UsageError("--tensor-draws must cover the same training window as --draws")
    reports = compare_methods(data, n_test, draws, tuple(args.horizons),
                              rng=np.random.default_rng(args.seed), lasso_lam=args.lasso_lambda,
                              tensor_draws=tensor)
    out = _out_dir(args) / "forecast_report.csv"
    write_reports(reports, out, tuple(args.horizons))
    log.info("wrote %s", out)
    return 0


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "diagnose": cmd_diagnose,
            "baseline": cmd_baseline, "forecast": cmd_forecast}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"msmetr: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:          # argparse reports its own errors
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr,
                        force=True)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"msmetr {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:           # runtime failures map to exit code 1
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
