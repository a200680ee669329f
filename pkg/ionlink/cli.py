"""Command-line entry point."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import caseswitcher
import numpy as np
from pydantic import ValidationError

from ionlink._models import (
    CalibrationModel,
    ExcitationConfig,
    RuntimeSettings,
    ShelvingConfig,
)
from ionlink._util import write_csv, write_json
from ionlink.errors import ConfigurationError, NumericalError
from ionlink.obe import (
    contrast_surface,
    emission_pdf,
    excitation_probability,
    fit_polarization_error,
    optimize_shelve_time,
    simulate_excitation,
)
from ionlink.photon import window_capture
from ionlink.rates import monte_carlo_rate, scenario_rate, window_tradeoff
from ionlink.scenario import load_scenario, validate_file
from ionlink.tomography import (
    bootstrap,
    error_budget_report,
    mle_reconstruct,
    simulate_dataset,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

CORRECTIONS = ("none", "before", "inside")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _threads(args: argparse.Namespace) -> int:
    return args.threads or RuntimeSettings().threads


def _tomography(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    seed = scenario.require_seed("tomography")
    shots = scenario.shots if args.shots is None else args.shots
    threads = _threads(args)
    dataset = simulate_dataset(scenario, shots, seed, threads)
    results = {mode: mle_reconstruct(dataset, correction=mode) for mode in CORRECTIONS}
    resamples = args.bootstrap
    if resamples is None:
        resamples = scenario.bootstrap_resamples
    if resamples:
        f_err, p_err = bootstrap(dataset, resamples, seed, "none", threads)
        results["none"] = replace(
            results["none"], fidelity_stderr=f_err, purity_stderr=p_err
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset.save(out / "dataset.json")
    write_json(
        out / "result.json",
        {
            "scenario": scenario.name,
            "seed": seed,
            "shots": shots,
            "results": {mode: r.to_json() for mode, r in results.items()},
        },
    )
    for mode, r in results.items():
        print(
            f"{caseswitcher.to_title(mode)}: F = {r.fidelity:.4f},"
            f" P = {r.purity:.4f}, F_max = {r.f_max:.4f}"
        )
    if not all(r.converged for r in results.values()):
        logger.error("Maximum-likelihood reconstruction did not converge")
        return EXIT_NUMERICAL
    return EXIT_OK


def _budget(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    budget = error_budget_report(scenario, args.correction)
    for line in budget.lines:
        print(f"{line.label:<28} {line.delta: .2e} {line.isolated: .2e}")
    print(f"{'Sum':<28} {budget.delta_sum: .2e}")
    print(f"{'Infidelity':<28} {budget.infidelity: .2e}")
    if args.out:
        write_json(Path(args.out), budget.to_json())
    return EXIT_OK


def _rate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    pdf = emission_pdf(simulate_excitation(scenario.excitation)) if args.obe else None
    report = scenario_rate(scenario, pdf)
    print(f"attempt rate: {report.attempts_per_s:.0f}/s")
    print(f"success probability: {report.p_ent:.4g}")
    print(f"analytic rate: {report.rate_per_s:.1f}/s")
    line = (
        f"3 ns window: P_w {report.p_w_3ns:.4f},"
        f" predicted {report.predicted_3ns:.3e}"
    )
    if report.measured_3ns is not None:
        line += f", measured {report.measured_3ns:.3e}"
    print(line)
    if args.mc:
        seed = scenario.require_seed("rate --mc")
        mc = monte_carlo_rate(scenario, args.mc, seed, _threads(args))
        low, high = mc.interval
        print(
            f"monte carlo rate: {mc.rate_per_s:.1f}/s [{low:.1f}, {high:.1f}]"
            f" (expected {mc.analytic_per_s:.1f}/s)"
        )
    return EXIT_OK


def _obe_excitation(args: argparse.Namespace) -> int:
    config = ExcitationConfig.parse_file(args.config)
    run = simulate_excitation(config)
    emission = config.emission
    pdf = emission_pdf(run, emission.upper, emission.lower, emission.desired_m)
    print(f"excitation probability: {excitation_probability(run, emission.upper):.4g}")
    print(f"emission probability: {pdf.total_probability:.4g}")
    if args.out:
        pdf.to_csv(Path(args.out))
    if args.trajectory:
        run.to_csv(Path(args.trajectory))
    return EXIT_OK


def _obe_shelving(args: argparse.Namespace) -> int:
    config = ShelvingConfig.parse_file(args.config)
    detunings = _floats(args.detunings)
    errors = _floats(args.pol_errors)
    surface = contrast_surface(detunings, errors, config)
    rows = []
    for i, detuning in enumerate(detunings):
        for j, error in enumerate(errors):
            time = optimize_shelve_time(detuning, error, config)
            rows.append([detuning, error, time, float(surface[i, j])])
    header = ["detuning_mhz", "pol_error", "shelve_time_us", "contrast"]
    if args.out:
        write_csv(Path(args.out), header, rows)
    for row in rows:
        print(" ".join(f"{v:.6g}" for v in row))
    return EXIT_OK


def _fit_polarization(args: argparse.Namespace) -> int:
    model = CalibrationModel.parse_file(args.config)
    data = np.loadtxt(args.data, delimiter=",", skiprows=1, ndmin=2)
    points = [(float(x), float(y)) for x, y in data[:, :2]]
    estimate, stderr = fit_polarization_error(points, model)
    print(f"polarization error: {estimate:.4g} +/- {stderr:.2g}")
    return EXIT_OK


def _sweep_window(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    pdf = emission_pdf(simulate_excitation(scenario.excitation))
    rows = window_tradeoff(
        pdf,
        scenario.ion.qubit_splitting_mhz,
        scenario.timing,
        scenario.rates.factors,
        _floats(args.windows),
    )
    table = [[r.window_ns, r.p_w, r.gamma, r.rate_per_s] for r in rows]
    write_csv(Path(args.out), ["window_ns", "p_w", "gamma", "rate_per_s"], table)
    capture = window_capture(pdf, scenario.detector)
    logger.info("Detection window of the scenario captures %.3f", capture)
    return EXIT_OK


def _validate(args: argparse.Namespace) -> int:
    problems = validate_file(Path(args.scenario), args.stochastic)
    for problem in problems:
        print(problem)
    if not problems:
        print("no violations")
    return EXIT_CONFIG if problems else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per pipeline."""
    parser = argparse.ArgumentParser(
        prog="ionlink", description="Ion-photon link simulator."
    )
    parser.add_argument(
        "--verbosity", choices=["warning", "info", "debug"], default="warning"
    )
    parser.add_argument(
        "--threads", type=int, default=None, help="Overrides IONLINK_THREADS."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    tomography = commands.add_parser(
        "tomography", help="Simulate and reconstruct a dataset."
    )
    tomography.add_argument("scenario", type=Path)
    tomography.add_argument("--shots", type=int, default=None)
    tomography.add_argument("--out", type=Path, default=Path("."))
    tomography.add_argument("--bootstrap", type=int, default=None)
    tomography.set_defaults(handler=_tomography)

    budget = commands.add_parser("budget", help="Per-mechanism fidelity budget.")
    budget.add_argument("scenario", type=Path)
    budget.add_argument("--correction", choices=CORRECTIONS, default="none")
    budget.add_argument("--out", type=Path, default=None)
    budget.set_defaults(handler=_budget)

    rate = commands.add_parser("rate", help="Analytic and Monte Carlo rates.")
    rate.add_argument("scenario", type=Path)
    rate.add_argument("--mc", type=float, default=None, metavar="SECONDS")
    rate.add_argument(
        "--obe", action="store_true", help="Take P_w from the simulated pulse."
    )
    rate.set_defaults(handler=_rate)

    obe = commands.add_parser("obe", help="Optical Bloch equation simulations.")
    obe_commands = obe.add_subparsers(dest="obe_command", required=True)
    excitation = obe_commands.add_parser("excitation")
    excitation.add_argument("config", type=Path)
    excitation.add_argument("--out", type=Path, default=None)
    excitation.add_argument("--trajectory", type=Path, default=None)
    excitation.set_defaults(handler=_obe_excitation)
    shelving = obe_commands.add_parser("shelving-scan")
    shelving.add_argument("config", type=Path)
    shelving.add_argument("--detunings", required=True)
    shelving.add_argument("--pol-errors", default="0")
    shelving.add_argument("--out", type=Path, default=None)
    shelving.set_defaults(handler=_obe_shelving)

    fit = commands.add_parser("fit-polarization", help="Fit a polarization-error scan.")
    fit.add_argument("data", type=Path)
    fit.add_argument("config", type=Path)
    fit.set_defaults(handler=_fit_polarization)

    sweep = commands.add_parser(
        "sweep-window", help="Detection-window trade-off table."
    )
    sweep.add_argument("scenario", type=Path)
    sweep.add_argument("--windows", required=True)
    sweep.add_argument("--out", type=Path, required=True)
    sweep.set_defaults(handler=_sweep_window)

    validate = commands.add_parser("validate", help="Check a scenario file.")
    validate.add_argument("scenario", type=Path)
    validate.add_argument("--stochastic", action="store_true")
    validate.set_defaults(handler=_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command line and return its exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.verbosity.upper()),
        format="%(asctime)s [%(levelname)s] [%(name)s] %(message)s",
    )
    try:
        return args.handler(args)
    except (ConfigurationError, ValidationError) as e:
        logger.error("%s", e)
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error("%s", e)
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error("%s", e)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
