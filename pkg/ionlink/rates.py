"""Heralding probability and entanglement-generation rates.

A herald needs the 1092 nm decay (P_p), collection and transmission (P_c),
detection (P_q) and arrival inside the window (P_w). The attempt loop
repeats pump, excitation and latency until a herald arrives, pausing for
Doppler cooling every `cooling_period` attempts.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ionlink._models import DetectorModel, RateFactors, TimingBudget
from ionlink._util import rng_for, thread_map
from ionlink.errors import ConfigurationError, ParameterRangeError
from ionlink.obe import excitation_pdf
from ionlink.photon import arrival_phase_coherence
from ionlink.scenario import Scenario
from ionlink.source import EmissionTimePDF, window_integral

logger = logging.getLogger(__name__)

MC_SEGMENTS = 16
MC_BATCH = 4096


def success_probability(f: RateFactors) -> float:
    """P_p * P_c * P_q * P_w."""
    if f.p_w is None:
        raise ConfigurationError("P_w is unset; derive it from an emission density.")
    return f.p_p * f.p_c * f.p_q * f.p_w


def attempt_rate(t: TimingBudget) -> float:
    """Attempts per second, cooling excluded.

    :param t: Timing budget.
    :return: 1 / (body + latency + travel).
    """
    period = t.attempt_us
    if period <= 0.0:
        raise ParameterRangeError("attempt period", period, 0.0)
    return 1e6 / period


def entanglement_rate(
    attempts_per_s: float, p_ent: float, leakage_fraction: float
) -> float:
    """Retained heralds per second.

    :param attempts_per_s: Attempt rate.
    :param p_ent: Herald probability per attempt.
    :param leakage_fraction: Fraction of heralds that left the qubit manifold.
    :return: attempts * p_ent * (1 - leakage).
    """
    if not 0.0 <= p_ent <= 1.0:
        raise ParameterRangeError("p_ent", p_ent, 0.0, 1.0)
    if not 0.0 <= leakage_fraction <= 1.0:
        raise ParameterRangeError("leakage_fraction", leakage_fraction, 0.0, 1.0)
    return attempts_per_s * p_ent * (1.0 - leakage_fraction)


def best_window(pdf: EmissionTimePDF, length_ns: float) -> tuple[float, float, float]:
    """Window of the given length capturing the most emission density.

    Starts are searched over the pdf grid, so longer windows never capture less.

    :return: Window start, window end and captured fraction.
    """
    if length_ns <= 0.0:
        return float(pdf.t_ns[0]), float(pdf.t_ns[0]), 0.0
    cdf = np.concatenate(
        ([0.0], np.cumsum(np.diff(pdf.t_ns) * (pdf.density[1:] + pdf.density[:-1]) / 2))
    )
    starts = pdf.t_ns
    captured = np.interp(starts + length_ns, pdf.t_ns, cdf) - cdf
    best = int(np.argmax(captured))
    start = float(starts[best])
    return start, start + length_ns, min(float(captured[best]), 1.0)


@dataclass(frozen=True)
class WindowRow:
    """One row of the window trade-off table."""

    window_ns: float
    p_w: float
    gamma: float
    rate_per_s: float


def window_tradeoff(
    pdf: EmissionTimePDF,
    splitting: float,
    timing: TimingBudget,
    factors: RateFactors,
    windows_ns: Sequence[float],
) -> list[WindowRow]:
    """Capture, arrival-phase coherence and rate per detection-window length.

    :param pdf: Emission density.
    :param splitting: Ion qubit splitting in MHz.
    :param timing: Timing budget.
    :param factors: Heralding factors; `p_w` is replaced per row.
    :param windows_ns: Window lengths.
    :return: Rows in the order of `windows_ns`.
    """
    attempts = attempt_rate(timing)
    rows = []
    for length in windows_ns:
        if length <= 0.0:
            rows.append(WindowRow(float(length), 0.0, 1.0, 0.0))
            continue
        t_i, t_f, p_w = best_window(pdf, length)
        det = DetectorModel(window_ns=(t_i, t_f))
        gamma = arrival_phase_coherence(pdf, det, splitting)
        p_ent = success_probability(factors.copy(update={"p_w": p_w}))
        rate = entanglement_rate(attempts, p_ent, timing.leakage_fraction)
        rows.append(WindowRow(float(length), p_w, gamma, rate))
    return rows


def herald_probability(scenario: Scenario, pdf: EmissionTimePDF | None = None) -> float:
    """Herald probability per attempt: measured when given, else composed.

    :param scenario: Scenario.
    :param pdf: Emission density for P_w. Without one the configured factor is
        used, or the scenario's simulated pulse when no factor is configured.
    :return: P_ent.
    """
    measured = scenario.rates.measured_success_probability
    if measured is not None:
        return measured
    factors = scenario.rates.factors
    if pdf is None and factors.p_w is None:
        pdf = excitation_pdf(scenario.excitation)
    if pdf is not None:
        t_i, t_f = scenario.detector.window_ns
        p_w = min(window_integral(pdf.t_ns, pdf.density, t_i, t_f), 1.0)
        factors = factors.copy(update={"p_w": p_w})
    return success_probability(factors)


@dataclass(frozen=True)
class RateReport:
    """Analytic rate summary of a scenario."""

    attempts_per_s: float
    p_ent: float
    leakage_fraction: float
    rate_per_s: float
    p_w_3ns: float
    predicted_3ns: float
    measured_3ns: float | None = None


def scenario_rate(scenario: Scenario, pdf: EmissionTimePDF | None = None) -> RateReport:
    """Attempt rate, herald probability and entanglement rate of a scenario.

    The 3 ns prediction always composes the configured factors with the best
    3 ns capture of `pdf`, or of the scenario's simulated pulse.
    """
    attempts = attempt_rate(scenario.timing)
    p_ent = herald_probability(scenario, pdf)
    leak = scenario.timing.leakage_fraction
    emission = pdf if pdf is not None else excitation_pdf(scenario.excitation)
    _, _, p_w = best_window(emission, 3.0)
    predicted = success_probability(scenario.rates.factors.copy(update={"p_w": p_w}))
    return RateReport(
        attempts_per_s=attempts,
        p_ent=p_ent,
        leakage_fraction=leak,
        rate_per_s=entanglement_rate(attempts, p_ent, leak),
        p_w_3ns=p_w,
        predicted_3ns=predicted,
        measured_3ns=scenario.rates.measured_3ns_success_probability,
    )


def cycle_rate(t: TimingBudget, p_ent: float) -> float:
    """Expected retained heralds per second including cooling and readout.

    :param t: Timing budget.
    :param p_ent: Herald probability per attempt.
    :return: Closed-form duty-cycle-adjusted rate.
    """
    n = t.cooling_period
    if p_ent <= 0.0:
        return 0.0
    p_success = 1.0 - (1.0 - p_ent) ** n
    mean_attempts = p_success / p_ent
    cycle_us = (
        t.cooling_duration_us + mean_attempts * t.attempt_us + p_success * t.readout_us
    )
    return 1e6 * p_success * (1.0 - t.leakage_fraction) / cycle_us


@dataclass(frozen=True)
class MonteCarloRate:
    """Empirical rate from the simulated attempt loop."""

    rate_per_s: float
    stderr: float
    successes: int
    duration_s: float
    analytic_per_s: float

    @property
    def interval(self) -> tuple[float, float]:
        """95 % Poisson interval on the rate."""
        half = 1.96 * self.stderr
        return self.rate_per_s - half, self.rate_per_s + half


def _segment(
    t: TimingBudget, p_ent: float, duration_us: float, rng: np.random.Generator
) -> int:
    """Retained heralds completed within one wall-clock segment."""
    n = t.cooling_period
    elapsed = 0.0
    successes = 0
    while elapsed < duration_us:
        if p_ent > 0:
            first = rng.geometric(p_ent, size=MC_BATCH)
        else:
            first = np.full(MC_BATCH, n + 1)
        won = first <= n
        attempts = np.minimum(first, n)
        cycle = t.cooling_duration_us + attempts * t.attempt_us + won * t.readout_us
        ends = elapsed + np.cumsum(cycle)
        inside = ends <= duration_us
        successes += int(np.count_nonzero(won & inside))
        elapsed = float(ends[-1])
    return int(rng.binomial(successes, 1.0 - t.leakage_fraction))


def monte_carlo_rate(
    scenario: Scenario,
    wall_duration: float,
    seed: int,
    threads: int = 1,
    p_ent: float | None = None,
) -> MonteCarloRate:
    """Event-driven simulation of the attempt loop.

    :param scenario: Scenario supplying the timing budget.
    :param wall_duration: Simulated wall-clock time in seconds.
    :param seed: Master seed; each segment draws from its own substream.
    :param threads: Worker threads.
    :param p_ent: Herald probability; defaults to the scenario's.
    :return: Empirical rate with Poisson standard error.
    """
    if wall_duration <= 0.0:
        raise ParameterRangeError("wall_duration", wall_duration, 0.0)
    t = scenario.timing
    attempt_rate(t)
    p = herald_probability(scenario) if p_ent is None else p_ent
    segment_us = wall_duration * 1e6 / MC_SEGMENTS

    def run(index: int) -> int:
        return _segment(t, p, segment_us, rng_for(seed, "monte-carlo", index))

    counts = thread_map(run, range(MC_SEGMENTS), threads)
    total = int(sum(counts))
    analytic = cycle_rate(t, p)
    if analytic * wall_duration < 1000:
        logger.warning("Fewer than 1000 expected successes; the interval is loose")
    logger.info("Monte Carlo: %d successes in %.3g s", total, wall_duration)
    return MonteCarloRate(
        rate_per_s=total / wall_duration,
        stderr=float(np.sqrt(total)) / wall_duration,
        successes=total,
        duration_s=wall_duration,
        analytic_per_s=analytic,
    )

