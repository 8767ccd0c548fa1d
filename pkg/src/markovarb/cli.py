"""Command-line entry point.

    markovarb <command> [--config FILE] [--seed N] [--out DIR] [--threads N] [--set key=value ...]

Exit status: 0 when the analysis completed (whatever its verdict), 2 for an
invalid configuration, 3 for a runtime failure. On a runtime failure every
file the run created is removed and ``error_report.txt`` is left behind.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__, ldp
from .arbitrage import certify_gdpf
from .config import (ConfigError, ExperimentConfig, build_model, build_strategy, load_config,
                     theta_grid)
from .engine import SimulationPlan, simulate
from .ergodic import empirical_invariant_histogram, run_ergodic
from .io import version_comment, write_csv, write_plot_data
from .model import clamped_cir, drifted_walk, stable_ar
from .strategy import Constant, FullInvest, PositiveDriftIndicator
from .utility import UtilitySpec, expected_utility_curve
from .verify import GridConfig, check_assumptions, format_report, search_drift_certificate

logger = logging.getLogger("markovarb")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

COMMANDS = ("simulate", "ergodic", "scgf", "gdpf", "utility", "verify", "drift-check", "paper-suite")


def _comment(cfg: ExperimentConfig, command: str) -> str:
    return version_comment(cfg.seed, f"command={command}")


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> None:
    sc = cfg.simulate
    plan = SimulationPlan(build_model(cfg.model), build_strategy(cfg.strategy), sc.horizon, sc.paths,
                          cfg.seed, tuple(sc.checkpoints), sc.record_states)
    ens = simulate(plan, cfg.threads)
    ens.to_csv(out / "simulate.csv", _comment(cfg, "simulate"))
    logger.info("simulated %d paths to t=%d (%d failures)", sc.paths, sc.horizon, len(ens.failures))


def cmd_ergodic(cfg: ExperimentConfig, out: Path) -> None:
    ec = cfg.ergodic
    model = build_model(cfg.model)
    rep = run_ergodic(model, build_strategy(cfg.strategy), ec.length, ec.burn_in, ec.batch_length, cfg.seed)
    rep.to_csv(out / "ergodic.csv", comment=_comment(cfg, "ergodic"))
    if ec.histogram_bins > 0:
        edges = np.linspace(-ec.histogram_range, ec.histogram_range, ec.histogram_bins + 1)
        hist = empirical_invariant_histogram(model, ec.length, rep.burn_in, edges, cfg.seed)
        hist.to_csv(out / "invariant_histogram.csv", _comment(cfg, "ergodic"))
    logger.info("nu_f = %.6g +- %.2g", rep.nu_f_hat, rep.nu_f_stderr)


def cmd_scgf(cfg: ExperimentConfig, out: Path) -> None:
    sc = cfg.scgf
    ck = ldp.default_checkpoints(sc.horizon) if sc.adaptive else (sc.horizon,)
    plan = SimulationPlan(build_model(cfg.model), build_strategy(cfg.strategy), sc.horizon, sc.paths,
                          cfg.seed, ck)
    ens = simulate(plan, cfg.threads)
    grid = theta_grid(sc)
    if sc.adaptive:
        curve = ldp.estimate_scgf_adaptive(ens, grid, ess_min=sc.ess_min)
    else:
        curve = ldp.estimate_scgf(ens, grid, ess_min=sc.ess_min)
    comment = _comment(cfg, "scgf")
    curve.to_csv(out / "scgf.csv", comment)
    ok = curve.valid
    write_plot_data(out / "scgf.dat", curve.theta_grid[ok], curve.lambda_hat[ok], comment)
    rate = ldp.legendre(curve, np.linspace(sc.x_lo, sc.x_hi, sc.x_n))
    rate.to_csv(out / "rate_function.csv", comment)
    fin = ~rate.boundary
    write_plot_data(out / "rate_function.dat", rate.x_grid[fin], rate.lambda_star[fin], comment)
    logger.info("%d of %d SCGF points valid; argmin of rate at x=%.4g", int(ok.sum()), ok.size,
                rate.argmin_x)


def cmd_gdpf(cfg: ExperimentConfig, out: Path) -> None:
    gc = cfg.gdpf
    rep = certify_gdpf(build_model(cfg.model), build_strategy(cfg.strategy), gc.b, gc.t_grid, gc.paths,
                       cfg.seed, v0=gc.v0, ergodic_length=gc.ergodic_length, workers=cfg.threads)
    comment = _comment(cfg, "gdpf")
    rep.to_csv(out / "gdpf.csv", comment)
    rep.write_plot_data(out / "gdpf_logp.dat", comment)
    (out / "gdpf_summary.txt").write_text(rep.summary() + "\n")
    logger.info(rep.summary())


def cmd_utility(cfg: ExperimentConfig, out: Path) -> None:
    uc = cfg.utility
    model, strategy = build_model(cfg.model), build_strategy(cfg.strategy)
    horizon = int(max(uc.t_grid))
    ck = sorted(set(int(t) for t in uc.t_grid) | set(ldp.default_checkpoints(horizon)))
    ens = simulate(SimulationPlan(model, strategy, horizon, uc.paths, cfg.seed, tuple(ck)), cfg.threads)
    comment = _comment(cfg, "utility")
    rows = []
    for a in uc.alphas:
        rep = expected_utility_curve(model, strategy, UtilitySpec(float(a)), uc.t_grid, v0=uc.v0,
                                     ensemble=ens)
        rep.to_csv(out / f"utility_alpha_{float(a)!r}.csv", comment)
        rows.append(rep.summary_row())
        logger.info("alpha=%g: Lambda=%.5g regime=%s", a, rep.lambda_f_alpha, rep.regime)
    write_csv(out / "utility_summary.csv", ["alpha", "lambda_f_alpha", "regime", "fitted_rate",
                                            "d_alpha_hat"], rows, comment)


def cmd_verify(cfg: ExperimentConfig, out: Path) -> None:
    vc = cfg.verify
    rep = check_assumptions(build_model(cfg.model), GridConfig(vc.x_max, vc.n, vc.annulus_lo, vc.eta))
    text = format_report(rep)
    (out / "verify.txt").write_text(f"# {_comment(cfg, 'verify')}\n" + text)
    sys.stdout.write(text)


def cmd_drift_check(cfg: ExperimentConfig, out: Path) -> None:
    dc = cfg.drift_check
    model = build_model(cfg.model)
    cert = search_drift_certificate(model, dc.q_grid, dc.delta_grid, dc.x_max, dc.n)
    comment = _comment(cfg, "drift-check")
    rep = check_assumptions(model, GridConfig(x_max=dc.x_max, n=dc.n))
    (out / "drift_certificate.txt").write_text(f"# {comment}\n" + format_report(rep, cert))
    cert.to_csv(out / "drift_margin.csv", comment)
    logger.info("drift certificate %s (q=%g, delta=%g, K=%.4g, b=%.4g)",
                "feasible" if cert.feasible else "infeasible", cert.q, cert.delta, cert.K, cert.b)


SUITE_HEADER = ["case", "model", "strategy", "analysis", "nu_f_hat", "nu_f_stderr", "b", "c_hat",
                "c_predicted", "lambda_f_alpha", "verdict"]


def paper_suite_rows(seed: int = 0, workers: int = 1, out: Path | None = None, comment: str = "",
                     paths: int = 100_000, ergodic_length: int = 2_000_000) -> list[list]:
    """The built-in examples end to end; seeds are ``seed + case index``."""
    nan = math.nan
    rows = []
    gdpf_cases = [
        ("stable_ar_pi_plus", stable_ar(0.5), PositiveDriftIndicator(), "auto"),
        ("clamped_cir_pi_plus", clamped_cir(0.5, 1.0, 0.5, 2.0), PositiveDriftIndicator(), "auto"),
        ("stable_ar_pi_zero", stable_ar(0.5), Constant(0.0), 0.05),
    ]
    for k, (name, model, strategy, b) in enumerate(gdpf_cases):
        erg = run_ergodic(model, strategy, ergodic_length, seed=seed + k)
        rep = certify_gdpf(model, strategy, b, M=paths, seed=seed + k, nu_f=erg.nu_f_hat,
                           workers=workers)
        if out is not None:
            rep.to_csv(out / f"suite_{name}_gdpf.csv", comment)
        rows.append([name, model.name, type(strategy).__name__, "gdpf", erg.nu_f_hat, erg.nu_f_stderr,
                     rep.growth_threshold, rep.c_hat, rep.c_predicted, nan, rep.verdict])
    k = len(gdpf_cases)
    model, strategy = drifted_walk(0.25), FullInvest()
    t_grid = (1, 2, 3, 4, 5, 6, 7, 8)
    ens = simulate(SimulationPlan(model, strategy, 8, paths, seed + k, t_grid), workers)
    urep = expected_utility_curve(model, strategy, UtilitySpec(-1.0), t_grid, ensemble=ens)
    if out is not None:
        urep.to_csv(out / "suite_drifted_walk_alpha_-1_utility.csv", comment)
    rows.append(["drifted_walk_alpha_-1", model.name, type(strategy).__name__, "utility", nan, nan, nan,
                 nan, nan, urep.lambda_f_alpha, urep.regime])
    return rows


def cmd_paper_suite(cfg: ExperimentConfig, out: Path) -> None:
    comment = _comment(cfg, "paper-suite")
    rows = paper_suite_rows(cfg.seed, cfg.threads, out, comment)
    write_csv(out / "paper_suite.csv", SUITE_HEADER, rows, comment)
    for r in rows:
        logger.info("%-24s %s", r[0], r[-1])


HANDLERS = {
    "simulate": cmd_simulate, "ergodic": cmd_ergodic, "scgf": cmd_scgf, "gdpf": cmd_gdpf,
    "utility": cmd_utility, "verify": cmd_verify, "drift-check": cmd_drift_check,
    "paper-suite": cmd_paper_suite,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="markovarb", description="Markovian arbitrage laboratory")
    p.add_argument("--version", action="version", version=f"markovarb {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="YAML experiment file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--threads", type=int)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. gdpf.b=0.05 (repeatable)")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def run(command: str, config_path=None, overrides=()) -> int:
    """Execute one command; returns the process exit status."""
    try:
        cfg = load_config(config_path, overrides)
    except (ConfigError, OSError) as exc:
        sys.stderr.write(f"markovarb: invalid configuration: {exc}\n")
        return EXIT_CONFIG
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    before = {p for p in out.rglob("*")}
    try:
        (out / "config.yaml").write_text(cfg.to_yaml())
        HANDLERS[command](cfg, out)
    except Exception as exc:  # noqa: BLE001 - any failure maps to exit status 3
        for p in sorted(set(out.rglob("*")) - before, reverse=True):
            if p.is_file():
                p.unlink()
            else:
                p.rmdir()
        (out / "error_report.txt").write_text(
            f"command: {command}\nerror: {type(exc).__name__}: {exc}\n\n"
            f"{traceback.format_exc()}\nconfig:\n{cfg.to_yaml()}")
        sys.stderr.write(f"markovarb: {command} failed: {exc}\n")
        return EXIT_RUNTIME
    (out / "error_report.txt").unlink(missing_ok=True)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    overrides = list(args.overrides)
    for key in ("seed", "out", "threads"):
        v = getattr(args, key)
        if v is not None:
            overrides.append(f"{key}={v}")
    return run(args.command, args.config, overrides)


if __name__ == "__main__":
    sys.exit(main())
