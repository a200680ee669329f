"""Heralding probability and rate tests."""
from __future__ import annotations

import unittest

import numpy as np
import pytest

from ionlink._models import RateFactors, TimingBudget
from ionlink.errors import ConfigurationError, ParameterRangeError
from ionlink.obe import excitation_pdf
from ionlink.photon import window_capture
from ionlink.rates import (
    attempt_rate,
    best_window,
    cycle_rate,
    entanglement_rate,
    herald_probability,
    monte_carlo_rate,
    scenario_rate,
    success_probability,
    window_tradeoff,
)
from ionlink.scenario import load_scenario, shipped_scenario
from ionlink.source import EmissionTimePDF, window_success_s

lab = load_scenario(shipped_scenario("paper_lab"))
deployed = load_scenario(shipped_scenario("paper_deployed"))

t = np.linspace(0.0, 50.0, 2001)
decay = np.exp(-t / 7.0)
pdf = EmissionTimePDF.normalized(t, decay, 0.02 * decay, total_probability=0.3)


class AnalyticRateTests(unittest.TestCase):
    def test_success_probability(self) -> None:
        f = RateFactors(p_p=0.056, p_c=0.021, p_q=0.8, p_w=0.81)
        assert success_probability(f) == pytest.approx(0.056 * 0.021 * 0.8 * 0.81)
        with pytest.raises(ConfigurationError):
            success_probability(RateFactors())

    def test_attempt_rates(self) -> None:
        assert attempt_rate(lab.timing) == pytest.approx(468_165, rel=1e-4)
        assert attempt_rate(deployed.timing) == pytest.approx(63_496, rel=1e-4)

    def test_zero_period(self) -> None:
        timing = TimingBudget(pump_us=0.0, excite_us=0.0, margin_us=0.0, latency_us=0.0)
        with pytest.raises(ParameterRangeError):
            attempt_rate(timing)

    def test_lab_rate(self) -> None:
        report = scenario_rate(lab)
        assert report.p_ent == 0.000764
        assert report.rate_per_s == pytest.approx(350.6, rel=1e-3)
        _, _, p_w = best_window(excitation_pdf(lab.excitation), 3.0)
        assert report.p_w_3ns == p_w
        assert report.predicted_3ns == pytest.approx(0.056 * 0.021 * 0.8 * p_w)
        assert report.measured_3ns == 0.000207

    def test_prediction_follows_the_given_density(self) -> None:
        report = scenario_rate(lab, pdf)
        expected = (1 - np.exp(-3 / 7.0)) / (1 - np.exp(-50 / 7.0))
        assert report.p_w_3ns == pytest.approx(expected, rel=1e-4)
        assert report.p_ent == 0.000764

    def test_deployed_rate(self) -> None:
        assert scenario_rate(deployed).rate_per_s == pytest.approx(15.94, rel=1e-3)

    def test_composed_probability(self) -> None:
        rates = lab.rates.copy(update={"measured_success_probability": None})
        composed = lab.copy(update={"rates": rates})
        simulated = window_capture(excitation_pdf(), composed.detector)
        assert herald_probability(composed) == pytest.approx(
            0.056 * 0.021 * 0.8 * simulated
        )
        t_i, t_f = composed.detector.window_ns
        p_w = (np.exp(-t_i / 7.0) - np.exp(-t_f / 7.0)) / (1 - np.exp(-50 / 7.0))
        assert herald_probability(composed, pdf) == pytest.approx(
            0.056 * 0.021 * 0.8 * p_w, rel=1e-4
        )

    def test_range_errors(self) -> None:
        with pytest.raises(ParameterRangeError) as e:
            entanglement_rate(1000.0, 1.5, 0.0)
        assert e.value.args[0] == 'Parameter "p_ent" must be [0.0, 1.0], got 1.5.'
        with pytest.raises(ParameterRangeError):
            entanglement_rate(1000.0, 0.5, -0.1)


class WindowTests(unittest.TestCase):
    def test_capture_is_monotone(self) -> None:
        captures = [best_window(pdf, w)[2] for w in (0.0, 1.0, 3.0, 10.0, 30.0, 60.0)]
        assert captures == sorted(captures)
        assert captures[0] == 0.0
        assert captures[-1] == pytest.approx(1.0)

    def test_best_start_of_decay(self) -> None:
        start, end, capture = best_window(pdf, 7.0)
        assert start == 0.0
        assert end == 7.0
        expected = (1 - np.exp(-1)) / (1 - np.exp(-50 / 7))
        assert capture == pytest.approx(expected, rel=1e-4)

    def test_tradeoff(self) -> None:
        windows = [3.0, 15.0, 30.0]
        rows = window_tradeoff(pdf, 6.7, lab.timing, lab.rates.factors, windows)
        assert [r.window_ns for r in rows] == [3.0, 15.0, 30.0]
        assert rows[0].p_w < rows[1].p_w < rows[2].p_w
        assert rows[0].gamma > rows[2].gamma
        assert rows[0].rate_per_s < rows[2].rate_per_s


class CycleRateTests(unittest.TestCase):
    def test_matches_analytic_without_overheads(self) -> None:
        analytic = entanglement_rate(attempt_rate(lab.timing), 0.000764, 0.0197)
        assert cycle_rate(lab.timing, 0.000764) == pytest.approx(analytic)

    def test_overheads_slow_the_loop(self) -> None:
        overheads = {"cooling_duration_us": 500.0, "readout_us": 300.0}
        timing = lab.timing.copy(update=overheads)
        assert cycle_rate(timing, 0.000764) < cycle_rate(lab.timing, 0.000764)

    def test_no_heralds(self) -> None:
        assert cycle_rate(lab.timing, 0.0) == 0.0


class MonteCarloTests(unittest.TestCase):
    def test_reproducible_across_threads(self) -> None:
        one = monte_carlo_rate(lab, 5.0, seed=7, threads=1)
        many = monte_carlo_rate(lab, 5.0, seed=7, threads=4)
        assert one == many

    def test_agrees_with_closed_form(self) -> None:
        overheads = {"cooling_duration_us": 200.0, "readout_us": 500.0}
        timing = lab.timing.copy(update=overheads)
        scenario = lab.copy(update={"timing": timing})
        mc = monte_carlo_rate(scenario, 10.0, seed=lab.seed)
        low, high = mc.interval
        assert mc.analytic_per_s == pytest.approx(cycle_rate(timing, 0.000764))
        assert low - mc.stderr < mc.analytic_per_s < high + mc.stderr
        assert mc.successes > 1000

    def test_duration_must_be_positive(self) -> None:
        with pytest.raises(ParameterRangeError) as e:
            monte_carlo_rate(lab, 0.0, seed=1)
        assert e.value.args[0] == 'Parameter "wall_duration" must be >= 0.0, got 0.0.'


class OperatingPointTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        """Simulate the default excitation pulse once."""
        cls.pdf = excitation_pdf()

    def test_three_ns_capture(self) -> None:
        _, _, p_w = best_window(self.pdf, 3.0)
        assert p_w == pytest.approx(0.18, abs=0.05)

    def test_three_ns_success_s(self) -> None:
        t_i, t_f, _ = best_window(self.pdf, 3.0)
        assert 1 - window_success_s(self.pdf, t_i, t_f) == pytest.approx(
            0.0107, abs=0.005
        )

    def test_twenty_ns_capture(self) -> None:
        assert best_window(self.pdf, 20.0)[2] >= 0.85
        assert window_capture(self.pdf, lab.detector) >= 0.85

    def test_predicted_rate_closes(self) -> None:
        report = scenario_rate(lab)
        assert report.predicted_3ns == pytest.approx(1.98e-4, rel=0.05)
        assert report.measured_3ns == pytest.approx(report.predicted_3ns, rel=0.1)

    def test_paper_collection_factors(self) -> None:
        for scenario in (lab, deployed):
            factors = scenario.rates.factors
            assert factors.p_w is None
            assert (factors.solid_angle, factors.optics, factors.coupling) == (
                0.1,
                0.65,
                0.66,
            )
            assert factors.p_c * factors.p_q == pytest.approx(0.0168)
