"""State tomography tests."""
from __future__ import annotations

import tempfile
import unittest
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionlink._models import NoiseToggles, ReadoutErrors
from ionlink.density import DensityMatrix
from ionlink.errors import ConfigurationError, MissingSettingError, ParameterRangeError
from ionlink.noise import effective_readout, link_state
from ionlink.scenario import load_scenario, shipped_scenario
from ionlink.source import JointLinkState, ideal_state, prepared_state, target_state
from ionlink.tomography import (
    SETTINGS,
    TomographyDataset,
    _likelihood,
    _pack,
    bootstrap,
    error_budget_report,
    exact_dataset,
    linear_inversion,
    initial_state,
    log_likelihood,
    mle_reconstruct,
    photon_projectors,
    sample_dataset,
    setting_probabilities,
    simulate_dataset,
)

measured = ReadoutErrors.measured()
rho_target = DensityMatrix.from_pure(target_state())


class DatasetTests(unittest.TestCase):
    def test_nine_settings(self) -> None:
        assert len(SETTINGS) == 9
        assert len(set(SETTINGS)) == 9

    def test_port_projectors_complete(self) -> None:
        for basis in ("H", "D", "R"):
            h, v = photon_projectors(basis)
            assert np.allclose(h + v, np.eye(2))

    def test_probabilities_sum_to_one(self) -> None:
        state = prepared_state(0.98)
        for setting in SETTINGS:
            probs = setting_probabilities(state, setting, measured)
            assert np.allclose(probs.sum(axis=1), 1.0)

    def test_leakage_is_dark(self) -> None:
        state = prepared_state(0.0)
        probs = setting_probabilities(state, SETTINGS[0], ReadoutErrors())
        assert probs[:, [0, 2]].sum() == 0.0
        # The leaked photon is H one time in four.
        assert probs[0, 1] == pytest.approx(0.25)

    def test_exact_counts(self) -> None:
        d = exact_dataset(ideal_state(), ReadoutErrors(), heralds=1000.0)
        zz = d.setting("H", "Z")
        assert zz.heralds == 1000.0
        assert zz.bright(0, 0) == pytest.approx(375.0)
        assert zz.bright(1, 1) == pytest.approx(125.0)
        assert zz.retained == pytest.approx(500.0)

    def test_sampling_reproducible_across_threads(self) -> None:
        state = prepared_state(0.98)
        one = sample_dataset(state, measured, 500, seed=42, threads=1)
        many = sample_dataset(state, measured, 500, seed=42, threads=4)
        other = sample_dataset(state, measured, 500, seed=43, threads=1)
        assert one == many
        assert one != other

    def test_odd_shots_split(self) -> None:
        d = sample_dataset(ideal_state(), measured, 501, seed=1)
        for s in d.settings:
            assert sum(s.pass_heralds[0]) == 251
            assert sum(s.pass_heralds[1]) == 250

    def test_zero_shots(self) -> None:
        with pytest.raises(ParameterRangeError) as e:
            sample_dataset(ideal_state(), measured, 0, seed=1)
        assert e.value.args[0] == 'Parameter "shots" must be >= 1, got 0.'

    def test_missing_setting(self) -> None:
        d = exact_dataset(ideal_state(), measured)
        partial = d.copy(update={"settings": d.settings[:-1]})
        last = SETTINGS[-1]
        with pytest.raises(MissingSettingError) as e:
            linear_inversion(partial)
        assert e.value.args[0] == (
            'Dataset has no counts for setting'
            f' photon="{last.photon}", ion="{last.ion}".'
        )

    def test_save_and_parse(self) -> None:
        d = sample_dataset(ideal_state(), measured, 100, seed=9)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "dataset.json"
            d.save(path)
            again = TomographyDataset.parse_file(path)
        assert again == d


class LinearInversionTests(unittest.TestCase):
    def test_exact_ideal(self) -> None:
        d = exact_dataset(ideal_state(), ReadoutErrors())
        assert np.allclose(linear_inversion(d), rho_target.matrix, atol=1e-9)

    def test_post_selection_removes_leakage(self) -> None:
        d = exact_dataset(prepared_state(0.9), ReadoutErrors())
        assert np.allclose(linear_inversion(d), rho_target.matrix, atol=1e-9)

    def test_correction_before(self) -> None:
        d = exact_dataset(ideal_state(), measured)
        raw = linear_inversion(d, "none")
        corrected = linear_inversion(d, "before")
        assert np.allclose(corrected, rho_target.matrix, atol=1e-6)
        assert not np.allclose(raw, rho_target.matrix, atol=1e-3)

    def test_settings_order_irrelevant(self) -> None:
        d = sample_dataset(prepared_state(0.98), measured, 500, seed=6)
        shuffled = d.copy(update={"settings": list(reversed(d.settings))})
        assert np.allclose(linear_inversion(shuffled), linear_inversion(d), atol=1e-12)
        forward, backward = mle_reconstruct(d), mle_reconstruct(shuffled)
        assert backward.fidelity == pytest.approx(forward.fidelity, abs=1e-6)
        assert backward.purity == pytest.approx(forward.purity, abs=1e-6)


class MaximumLikelihoodTests(unittest.TestCase):
    def test_gradient(self) -> None:
        d = sample_dataset(prepared_state(0.98), measured, 300, seed=5)
        model = _likelihood(d, "inside")
        rng = np.random.default_rng(0)
        x = _pack(np.linalg.cholesky(np.eye(4) / 4)) + 0.05 * rng.standard_normal(16)
        _, grad = model.objective(x)
        h = 1e-6
        numeric = np.array(
            [
                (model.objective(x + h * u)[0] - model.objective(x - h * u)[0])
                / (2 * h)
                for u in np.eye(16)
            ]
        )
        assert np.allclose(grad, numeric, atol=1e-6)

    def test_recovers_exact_state(self) -> None:
        d = exact_dataset(ideal_state(), ReadoutErrors())
        result = mle_reconstruct(d)
        assert result.converged
        assert result.fidelity > 0.999
        assert result.purity > 0.998
        assert result.f_max == pytest.approx(1.0, abs=2e-3)

    def test_readout_corrections(self) -> None:
        d = exact_dataset(ideal_state(), measured)
        none = mle_reconstruct(d, correction="none")
        before = mle_reconstruct(d, correction="before")
        inside = mle_reconstruct(d, correction="inside")
        assert inside.fidelity > 0.999
        assert before.fidelity > 0.998
        assert none.fidelity < inside.fidelity - 0.002
        assert inside.correction == "inside"

    def test_fidelity_below_purity_bound(self) -> None:
        d = sample_dataset(prepared_state(0.98), measured, 2000, seed=3)
        result = mle_reconstruct(d)
        assert result.fidelity <= result.f_max + 1e-9
        assert np.all(result.rho.eigenvalues() > -1e-9)

    def test_never_worse_than_start(self) -> None:
        d = sample_dataset(ideal_state(), measured, 1000, seed=8)
        start = DensityMatrix.maximally_mixed(4)
        result = mle_reconstruct(d, init=start, max_iterations=1)
        assert result.log_likelihood >= log_likelihood(d, start) - 1e-9

    def test_not_worse_than_linear_inversion(self) -> None:
        for seed in (1, 2, 3):
            d = sample_dataset(prepared_state(0.98), measured, 500, seed=seed)
            result = mle_reconstruct(d)
            assert result.log_likelihood >= log_likelihood(d, initial_state(d)) - 1e-9

    def test_true_state_more_likely_than_mixed(self) -> None:
        d = sample_dataset(ideal_state(), ReadoutErrors(), 1000, seed=4)
        mixed = DensityMatrix.maximally_mixed(4)
        assert log_likelihood(d, rho_target) > log_likelihood(d, mixed)

    def test_unknown_correction(self) -> None:
        d = exact_dataset(ideal_state(), measured)
        with pytest.raises(ConfigurationError) as e:
            mle_reconstruct(d, correction="twice")  # type: ignore[arg-type]
        assert e.value.args[0] == 'Unknown readout correction "twice".'


class BootstrapTests(unittest.TestCase):
    def test_exact_dataset_has_no_spread(self) -> None:
        d = exact_dataset(ideal_state(), measured)
        assert bootstrap(d, 100, seed=1) == (0.0, 0.0)

    def test_minimum_resamples(self) -> None:
        d = exact_dataset(ideal_state(), measured)
        with pytest.raises(ParameterRangeError):
            bootstrap(d, 10, seed=1)

    def test_spread(self) -> None:
        d = sample_dataset(prepared_state(0.98), measured, 2000, seed=12)
        f_err, p_err = bootstrap(d, 100, seed=12, threads=2)
        assert 0.0 < f_err < 0.03
        assert 0.0 < p_err < 0.05


class ScenarioTomographyTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        """Load the laboratory scenario."""
        cls.lab = load_scenario(shipped_scenario("paper_lab"))

    def test_lab_reconstruction(self) -> None:
        d = simulate_dataset(self.lab, 10_000, self.lab.seed)
        result = mle_reconstruct(d)
        assert result.converged
        assert 0.94 <= result.fidelity <= 0.96
        assert result.purity == pytest.approx(0.91, abs=0.02)
        assert d.scenario == "paper_lab"

    def test_lab_reconstruction_without_shot_noise(self) -> None:
        state = link_state(self.lab)
        d = exact_dataset(state, effective_readout(self.lab, self.lab.noise))
        result = mle_reconstruct(d)
        assert 0.94 <= result.fidelity <= 0.96
        assert 0.90 <= result.purity <= 0.92

    def test_noise_free_scenario(self) -> None:
        d = simulate_dataset(self.lab, 2000, 1, toggles=NoiseToggles.none())
        assert d.errors == ReadoutErrors()
        assert mle_reconstruct(d).fidelity > 0.97

    def test_dephasing_budget_line(self) -> None:
        budget = error_budget_report(
            self.lab, mechanisms=["qubit_decoherence", "qubit_readout"]
        )
        lines = {line.name: line for line in budget.lines}
        assert lines["qubit_decoherence"].isolated == pytest.approx(0.0125, abs=0.002)
        assert lines["qubit_decoherence"].label == "Qubit Decoherence"
        assert lines["qubit_readout"].isolated == pytest.approx(0.006, abs=0.002)
        assert budget.ideal_fidelity > 0.999

    def test_budget_closes(self) -> None:
        budget = error_budget_report(self.lab)
        assert budget.fidelity == pytest.approx(0.955, abs=0.01)
        assert abs(budget.delta_sum - budget.infidelity) < 0.005
        assert all(line.delta > -1e-4 for line in budget.lines)


class DeployedTomographyTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.deployed = load_scenario(shipped_scenario("paper_deployed"))

    def test_deployed_reconstruction(self) -> None:
        d = simulate_dataset(self.deployed, 10_000, self.deployed.seed, threads=2)
        result = mle_reconstruct(d)
        assert 0.92 <= result.fidelity <= 0.94

    def test_deployed_budget_closes(self) -> None:
        budget = error_budget_report(self.deployed)
        assert 0.92 <= budget.fidelity <= 0.94
        assert abs(budget.delta_sum - budget.infidelity) <= 0.005
        lines = {line.name: line for line in budget.lines}
        instability = lines["polarization_instability"].isolated
        assert instability == pytest.approx(0.0165, abs=0.002)

    def test_travel_budget_line(self) -> None:
        budget = error_budget_report(self.deployed, mechanisms=["travel_decoherence"])
        (line,) = budget.lines
        gamma = np.exp(-13.613 / 1360)
        assert line.isolated == pytest.approx(3 / 8 * (1 - gamma), abs=5e-4)
        assert 0.0025 < line.isolated < 0.0045


@settings(max_examples=50, deadline=None)
@given(
    parts=st.lists(
        st.floats(-1.0, 1.0, allow_nan=False), min_size=32, max_size=32
    )
)
def test_linear_inversion_is_exact(parts: list[float]) -> None:
    g = np.reshape(parts[:16], (4, 4)) + 1j * np.reshape(parts[16:], (4, 4))
    m = g @ g.conj().T + 0.01 * np.eye(4)
    rho = DensityMatrix(m / np.trace(m).real)
    d = exact_dataset(JointLinkState(rho), ReadoutErrors())
    assert np.allclose(linear_inversion(d), rho.matrix, atol=1e-9)
