"""Command-line front end: ``ddlqg <subcommand> --config cfg.json --out dir``.

Exit status: 0 success, 1 invalid input (config, arguments, output path),
2 numerical failure (message on stderr), 3 a threshold embedded in the
config was violated.
"""

import argparse
import json
import logging
import sys
import tempfile
from pathlib import Path

import numpy as np

from .config import bundled_config_path, load_config
from .errors import NumericalError, ValidationError
from .harness import (ExperimentConfig, emit_report, lemma_check_gaussian_product,
                      lemma_check_singular_values, run_convergence)
from .kalman import filter_bank_from_data
from .lqg import collect_closed_loop_dataset, lqg_gain_from_data
from .lqr import build_synthesis, lqr_gain_from_data
from .oracle import kalman_oracle, lqg_static_gain, lqr_gain
from .system import (CostWeights, ExperimentInputSpec, LinearSystem, derive_seed,
                     generate_open_loop_dataset, save_dataset)

log = logging.getLogger("ddlqg")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_THRESHOLD = 0, 1, 2, 3
SUBCOMMANDS = ("simulate", "lqr", "kf", "lqg", "reproduce-fig1", "lemma-check")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None,
                        help="JSON config (default: the bundled two-state example)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--workers", type=int, default=1, help="worker processes for the harness")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="report / diagnostics format")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="ddlqg", description="Data-driven LQR/Kalman/LQG tools.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    helps = {
        "simulate": "generate an open-loop dataset",
        "lqr": "data-driven LQR gain",
        "kf": "data-driven time-varying filter gains",
        "lqg": "data-driven LQG: closed-loop data and the static gain",
        "reproduce-fig1": "convergence study over the N grid",
        "lemma-check": "Monte Carlo check of the concentration lemmas",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


class _Ctx:
    def __init__(self, cfg, out, fmt, workers):
        self.cfg, self.out, self.fmt, self.workers = cfg, out, fmt, workers
        self.system = LinearSystem.from_config(cfg)
        self.weights = CostWeights.from_config(cfg)
        self.weights.check_against(self.system)
        self.spec = ExperimentInputSpec.from_config(cfg)

    def write_matrix(self, name, M):
        np.savetxt(self.out / name, np.atleast_2d(M), delimiter=",", fmt="%.17g")

    def write_diagnostics(self, diag, stem="diagnostics"):
        if self.fmt == "json":
            text = json.dumps(diag, sort_keys=True, indent=2) + "\n"
            (self.out / f"{stem}.json").write_text(text)
        else:
            lines = ["key,value"] + [f"{k},{_scalar(v)}" for k, v in sorted(diag.items())]
            (self.out / f"{stem}.csv").write_text("\n".join(lines) + "\n")

    def dataset(self):
        return generate_open_loop_dataset(self.system, self.spec)


def _scalar(v):
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else json.dumps(v)


def _prepare_out(out):
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with tempfile.TemporaryFile(dir=out):
            pass
    except OSError as exc:
        raise ValidationError(f"output directory {out} is not writable: {exc.strerror}") from None
    return out


def cmd_simulate(ctx):
    ds = ctx.dataset()
    save_dataset(ds, ctx.out / "dataset")
    ctx.write_diagnostics({"N": ds.N, "T": ds.T, "n": ds.n, "m": ds.m, "p": ds.p,
                           "seed": int(ctx.spec.seed)})
    return EXIT_OK


def cmd_lqr(ctx):
    ds = ctx.dataset()
    synth = build_synthesis(ds, ctx.weights)
    est = lqr_gain_from_data(ds, ctx.weights, synth=synth)
    K = lqr_gain(ctx.system, ctx.weights)
    ctx.write_matrix("K_lqr.csv", est.K)
    ctx.write_matrix("K_lqr_oracle.csv", K)
    ctx.write_diagnostics({"error_2norm": float(np.linalg.norm(est.K - K, 2)),
                           "fit_residual": synth.fit_residual,
                           "sigma_min_data": synth.sigma_min_data,
                           "sigma_min_xm": est.sigma_min_xm,
                           "normal_residual": est.normal_residual, "N": ds.N})
    return EXIT_OK


def cmd_kf(ctx):
    ds = ctx.dataset()
    bank = filter_bank_from_data(ds)
    oracle = kalman_oracle(ctx.system, ds.T)
    gdir = ctx.out / "filter_gains"
    gdir.mkdir(exist_ok=True)
    for t, L in enumerate(bank.gains):
        np.savetxt(gdir / f"L_{t}.csv", L, delimiter=",", fmt="%.17g")
    ctx.write_matrix("conditioning.csv", bank.conditioning[:, None])
    errs = [float(np.linalg.norm(bank.gains[t] - oracle.gains[t], 2)) for t in range(ds.T + 1)]
    ctx.write_diagnostics({"error_T_2norm": errs[-1], "error_max_over_t": max(errs),
                           "min_sigma_Z": float(bank.conditioning.min()), "N": ds.N})
    return EXIT_OK


def cmd_lqg(ctx):
    ds = ctx.dataset()
    K_d = lqr_gain_from_data(ds, ctx.weights).K
    bank = filter_bank_from_data(ds)
    M = ctx.cfg.get("lqg", {}).get("M", 100)
    cl = collect_closed_loop_dataset(ctx.system, K_d, bank, M,
                                     derive_seed(int(ctx.spec.seed), 5))
    est = lqg_gain_from_data(cl, K_d, bank)
    oracle = lqg_static_gain(ctx.system, ctx.weights)
    ctx.write_matrix("K_lqg.csv", est.K)
    ctx.write_matrix("K_lqg_oracle.csv", oracle.K)
    cdir = ctx.out / "closed_loop"
    cdir.mkdir(exist_ok=True)
    for name, arr in (("U_dlqg", cl.U_dlqg), ("Y_dlqg", cl.Y_dlqg), ("U_T", cl.U_T)):
        np.savetxt(cdir / f"{name}.csv", arr, delimiter=",", fmt="%.17g")
    ctx.write_diagnostics({"error_2norm": float(np.linalg.norm(est.K - oracle.K, 2)),
                           "c4_norm": est.c4_norm, "window_sigma_min": est.window_sigma_min,
                           "M": M, "N": ds.N})
    return EXIT_OK


def cmd_reproduce(ctx):
    config = ExperimentConfig.from_config(ctx.cfg)
    report = run_convergence(config, workers=ctx.workers)
    emit_report(report, ctx.out, ctx.fmt)
    for check in report.checks:
        log.info("%s %s: %s", "PASS" if check["passed"] else "FAIL", check["name"],
                 check["detail"])
    if not report.passed:
        failed = [c["name"] for c in report.checks if not c["passed"]]
        print(f"threshold checks failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_lemma(ctx):
    lc = ctx.cfg.get("lemma", {})
    delta = lc.get("delta", 0.05)
    reps = lc.get("reps", 500)
    seed = int(ctx.spec.seed)
    n, m = ctx.system.n, ctx.system.m
    prod = lemma_check_gaussian_product(n, m, lc.get("N_product", 1000), delta, reps, seed)
    sv = lemma_check_singular_values(lc.get("n_singular", 5), lc.get("N_singular", 200), delta,
                                     reps, seed)
    diag = {"delta": delta, "reps": reps, "product_violation_freq": prod.frequency,
            "product_threshold": prod.threshold, "sigma_min_violation_freq": sv.freq_min,
            "sigma_max_violation_freq": sv.freq_max}
    ctx.write_diagnostics(diag, stem="lemma")
    if max(prod.frequency, sv.freq_min, sv.freq_max) > delta:
        print(f"empirical violation frequency exceeds delta={delta}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "lqr": cmd_lqr, "kf": cmd_kf, "lqg": cmd_lqg,
            "reproduce-fig1": cmd_reproduce, "lemma-check": cmd_lemma}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        cfg = load_config(args.config if args.config else bundled_config_path())
        if args.seed is not None:
            if args.seed < 0:
                raise ValidationError("--seed must be nonnegative")
            cfg = {**cfg, "seed": args.seed}
        if args.workers < 1:
            raise ValidationError("--workers must be >= 1")
        ctx = _Ctx(cfg, None, args.format, args.workers)
        ctx.out = _prepare_out(args.out)
        return COMMANDS[args.command](ctx)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NUMERICAL


def entry_point():
    sys.exit(main())
