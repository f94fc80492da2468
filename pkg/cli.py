#!/usr/bin/env python3
"""
LossRank command line
Reproduces the margin-probability and expected-gradient tables, checks the
ranking gradients, fits integer-shape gamma distributions to loss samples
and runs the active learning simulator.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

import config
from active_sim import run_repeats, summarize_reports
from errors import (InputFormatError, InsufficientAcceptanceError,
                    KinkProximityError, LossRankError, NumericInstabilityError)
from expected_grad import ExpectedGradQuery, phi_closed, phi_mc, phi_quad
from gamma_fit import fit_integer_gamma
from margin_prob import (MarginQuery, margin_probability_closed,
                         margin_probability_mc, margin_probability_quad,
                         margin_probability_series)
from rank_loss import KL, HingeConfig, finite_difference_check, random_pair
from sim_config import config_hash, config_to_dict, load_sim_config
from specfun import GammaParams
from tables import OutputTable

logger = logging.getLogger(__name__)


def configure_logging(level):
    logging.basicConfig(
        level=getattr(logging, level),
        format=config.LOG_FORMAT,
        handlers=[
            logging.FileHandler(config.LOG_FILE),
            logging.StreamHandler(sys.stderr)
        ]
    )


def margin_table(k, theta, deltas, mc_samples, seed, workers=1):
    """Closed form, positive series, quadrature and Monte Carlo margin probabilities for each delta"""
    params = GammaParams(k, theta)
    columns = ["delta", "closed", "closed_status", "series", "quad", "mc", "mc_stderr",
               "abs_closed_quad", "abs_series_quad"]
    if params.k == 1:
        columns.append("exponential_law")
    table = OutputTable(columns)
    failures = []

    for delta in deltas:
        query = MarginQuery(delta, params)
        try:
            closed, status = margin_probability_closed(query).total, "ok"
        except NumericInstabilityError as e:
            logger.warning(f"margin closed form unavailable at delta={delta}: {e}")
            closed, status = math.nan, "unstable"
        series = margin_probability_series(query)
        quad = margin_probability_quad(query)
        gap = abs(closed - quad) if status == "ok" else math.nan
        series_gap = abs(series - quad)
        if mc_samples > 0:
            mc, stderr = margin_probability_mc(query, mc_samples, seed, workers)
            if abs(mc - quad) > config.MC_SIGMA_GATE * stderr + 1e-9:
                failures.append(f"delta={delta}: Monte Carlo {mc:.6g} +/- {stderr:.2g} disagrees with {quad:.6g}")
        else:
            mc = stderr = math.nan
        if status == "ok" and gap > config.MARGIN_CLOSED_QUAD_TOL:
            failures.append(f"delta={delta}: |closed - quad| = {gap:.3g}")
        if series_gap > config.MARGIN_CLOSED_QUAD_TOL:
            failures.append(f"delta={delta}: |series - quad| = {series_gap:.3g}")
        row = [query.delta, closed, status, series, quad, mc, stderr, gap, series_gap]
        if params.k == 1:
            row.append(-math.expm1(-query.delta / params.theta))
        table.add_row(row)
        logger.info(f"margin delta={delta}: closed {closed:.6g} ({status}), series {series:.6g}, quad {quad:.6g}")
    return table, failures


def phi_table(k, theta, deltas, mc_samples, seed, workers=1):
    """phi by quadrature (record), closed form and Monte Carlo for each delta_2"""
    params = GammaParams(k, theta)
    table = OutputTable(["delta", "phi_quad", "phi_closed", "closed_status", "phi_mc", "phi_mc_stderr",
                         "coefficient", "abs_closed_quad"])
    failures = []

    for delta in deltas:
        record = phi_quad(delta, params)
        if delta == 0:
            closed, status = 0.5, "limit"
        else:
            try:
                closed, status = phi_closed(ExpectedGradQuery(delta, params)).phi, "ok"
            except NumericInstabilityError as e:
                logger.warning(f"phi closed form unavailable at delta={delta}: {e}")
                closed, status = math.nan, "unstable"
        gap = abs(closed - record) if status != "unstable" else math.nan
        if status == "ok" and gap > config.PHI_CLOSED_QUAD_TOL:
            failures.append(f"delta={delta}: |phi closed - phi quad| = {gap:.3g}")

        mc = stderr = math.nan
        if mc_samples > 0:
            band = config.PHI_MC_BAND if delta == 0 else min(config.PHI_MC_BAND, delta / 10.0)
            try:
                mc, stderr = phi_mc(delta, band, params, mc_samples, seed, workers)
            except InsufficientAcceptanceError as e:
                logger.warning(f"phi Monte Carlo skipped at delta={delta}: {e}")
            else:
                if abs(mc - record) > config.MC_SIGMA_GATE * stderr:
                    failures.append(f"delta={delta}: phi Monte Carlo {mc:.6g} +/- {stderr:.2g} "
                                    f"disagrees with {record:.6g}")
        table.add_row([delta, record, closed, status, mc, stderr, 0.5 - record, gap])
        logger.info(f"phi delta={delta}: quad {record:.6g}, closed {closed:.6g} ({status})")
    return table, failures


def gradcheck_table(trials, seed, dim=config.GRADCHECK_DIM):
    """Worst finite-difference error over random pairs for both objectives"""
    table = OutputTable(["objective", "trials", "max_relative_error"])
    if trials == 0:
        return table, []
    rng = np.random.default_rng(seed)
    hinge = HingeConfig(config.TRAIN_HINGE_MARGIN)
    worst = {"kl": 0.0, "hinge": 0.0}
    redraws = 0

    for _ in range(trials):
        worst["kl"] = max(worst["kl"], finite_difference_check(random_pair(rng, dim), KL))
        while True:
            pair = random_pair(rng, dim)
            try:
                error = finite_difference_check(pair, hinge)
                break
            except KinkProximityError:
                redraws += 1
        worst["hinge"] = max(worst["hinge"], error)

    if redraws:
        logger.info(f"Redrew {redraws} hinge pairs that sat on the kink")
    failures = []
    for name, error in worst.items():
        table.add_row([name, trials, error])
        if error > config.GRADCHECK_TOL:
            failures.append(f"{name}: finite-difference error {error:.3g} exceeds {config.GRADCHECK_TOL}")
    return table, failures


def read_loss_file(path):
    """One nonnegative loss per line; blank lines are skipped"""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise InputFormatError(f"{path}: cannot read: {e}")
    values = []
    for number, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        try:
            values.append(float(text))
        except ValueError:
            raise InputFormatError(f"{path}: line {number}: cannot parse {text!r} as a number")
    return np.array(values)


def fit_table(path, k_max):
    result = fit_integer_gamma(read_loss_file(path), k_max)
    table = OutputTable(["k", "theta", "log_likelihood", "chosen"])
    for candidate in result.candidates:
        table.add_row([candidate.k, candidate.theta, candidate.log_likelihood,
                       "yes" if candidate.k == result.params.k else "no"])
    return table, []


def _sibling(out, suffix):
    path = Path(out)
    return path.with_name(f"{path.stem}{suffix}")


def simulate(config_path, seed, repeats, out):
    """Run the simulator; writes the manifest and, for repeats, per-seed and summary CSVs"""
    sim = load_sim_config(config_path)
    seed = sim.seed if seed is None else seed
    repeats = sim.repeats if repeats is None else repeats
    if repeats < 1:
        raise LossRankError(f"repeats must be >= 1, got {repeats}")
    seeds = [seed + r for r in range(repeats)]
    reports = run_repeats(sim, seeds)
    outputs = []

    if out is not None:
        outputs.append(Path(out).name)
        for report in reports[1:]:
            extra = _sibling(out, f".seed{report.seed}.csv")
            report.to_table().write(extra)
            outputs.append(extra.name)
        if repeats > 1:
            summary = _sibling(out, ".summary.csv")
            summarize_reports(reports).write(summary)
            outputs.append(summary.name)
        manifest = {
            "seed": seed,
            "seeds": seeds,
            "config_hash": config_hash(sim),
            "config": config_to_dict(sim),
            "outputs": outputs,
        }
        _sibling(out, ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                                   encoding="utf-8")
    elif repeats > 1:
        logger.warning("--repeats without --out: only the first seed is printed")
    return reports[0].to_table(), []


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Random seed (default 0, or the config seed)")
    common.add_argument("--out", default=None, help="Output file (default stdout)")
    common.add_argument("--format", choices=["csv", "text"], default="csv")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default=config.LOG_LEVEL)
    common.add_argument("--workers", type=int, default=1, help="Threads for Monte Carlo shards")

    parser = argparse.ArgumentParser(prog="lossrank", description=__doc__.strip().splitlines()[1])
    commands = parser.add_subparsers(dest="command", required=True)

    margin = commands.add_parser("margin-table", parents=[common], help="Margin probability table")
    margin.add_argument("--k", type=int, default=config.DEFAULT_SHAPE)
    margin.add_argument("--theta", type=float, default=config.DEFAULT_SCALE)
    margin.add_argument("--deltas", type=float, nargs="+", default=config.MARGIN_DELTAS)
    margin.add_argument("--mc-samples", type=int, default=config.MC_SAMPLES, help="0 skips Monte Carlo")
    margin.set_defaults(handler=lambda a: margin_table(a.k, a.theta, a.deltas, a.mc_samples,
                                                       _seed(a), a.workers))

    phi = commands.add_parser("phi-table", parents=[common], help="Expected gradient coefficient table")
    phi.add_argument("--k", type=int, default=config.DEFAULT_SHAPE)
    phi.add_argument("--theta", type=float, default=config.DEFAULT_SCALE)
    phi.add_argument("--deltas", type=float, nargs="+", default=config.PHI_DELTAS)
    phi.add_argument("--mc-samples", type=int, default=config.MC_SAMPLES, help="0 skips Monte Carlo")
    phi.set_defaults(handler=lambda a: phi_table(a.k, a.theta, a.deltas, a.mc_samples, _seed(a), a.workers))

    grad = commands.add_parser("gradcheck", parents=[common], help="Finite-difference gradient check")
    grad.add_argument("--trials", type=int, default=config.GRADCHECK_TRIALS)
    grad.set_defaults(handler=lambda a: gradcheck_table(a.trials, _seed(a)))

    fit = commands.add_parser("fit", parents=[common], help="Fit an integer-shape gamma to loss samples")
    fit.add_argument("--input", required=True, help="Text file with one loss per line")
    fit.add_argument("--k-max", type=int, default=config.K_MAX)
    fit.set_defaults(handler=lambda a: fit_table(a.input, a.k_max))

    sim = commands.add_parser("simulate", parents=[common], help="Active learning simulation")
    sim.add_argument("--config", required=True, help="YAML simulator config")
    sim.add_argument("--repeats", type=int, default=None, help="Number of consecutive seeds")
    sim.set_defaults(handler=lambda a: simulate(a.config, a.seed, a.repeats, a.out))
    return parser


def _seed(args):
    return 0 if args.seed is None else args.seed


def main(argv=None):
    """Main entry point; returns 0 on success, 1 on a failed gate and 2 on an error"""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    try:
        table, failures = args.handler(args)
        table.write(args.out, args.format)
    except LossRankError as e:
        logger.error(f"Error: {e}")
        return 2
    except Exception as e:
        logger.error(f"Fatal error: {e}")
        return 1

    for failure in failures:
        logger.error(f"Check failed: {failure}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
