"""Two-pass shelving readout tests."""
from __future__ import annotations

import unittest

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from ionlink._models import ReadoutErrors
from ionlink.density import DensityMatrix, psd_project
from ionlink.errors import ConfigurationError, InvalidStateError, SingularReadoutError
from ionlink.readout import (
    TrialCounts,
    bright_operator,
    bright_probability,
    correct_counts,
    correction_matrix,
    forward_matrix,
    ion_outcome,
    raman_scattering_estimate,
    rotated_populations,
    simulate_trials,
    solve_populations,
)

measured = ReadoutErrors.measured()
with_pi2 = measured.copy(update={"eps_pi2": 0.00133})


class ForwardMatrixTests(unittest.TestCase):
    def test_pass_one(self) -> None:
        m = forward_matrix(1, measured)
        assert np.allclose(m[0], [1 - 0.0159, 0.005, 0.0])
        assert np.allclose(m[0] + m[1], 1.0)
        assert np.allclose(m[2], 1.0)

    def test_pass_two_swaps_qubit_states(self) -> None:
        m = forward_matrix(2, measured)
        e = measured
        expected = (1 - e.eps_b) * (1 - e.eps_s) * e.eps_pi
        expected += e.eps_d * (1 - e.eps_s) * (1 - e.eps_pi)
        assert m[0, 0] == pytest.approx(expected)
        assert m[0, 0] == pytest.approx(0.005924, abs=1e-6)
        assert np.allclose(m[0] + m[1], 1.0)

    def test_pass_two_neglects_cross_term(self) -> None:
        e = ReadoutErrors(eps_d2=0.02, eps_s=0.1)
        m = forward_matrix(2, e)
        # |1> swapped to |0> reads bright unless scattered.
        assert m[0, 1] == pytest.approx(0.9)
        assert m[1, 1] == pytest.approx(0.1)
        assert m[0, 2] == pytest.approx(0.02)

    def test_bad_pass(self) -> None:
        with pytest.raises(ConfigurationError) as e:
            forward_matrix(3, measured)  # type: ignore[arg-type]
        assert e.value.args[0] == "Readout pass must be 1 or 2, got 3."

    def test_bright_probability(self) -> None:
        assert bright_probability((1.0, 0.0, 0.0), 1, measured) == pytest.approx(0.9841)
        assert bright_probability((0.0, 1.0, 0.0), 1, measured) == pytest.approx(0.005)


class CorrectionTests(unittest.TestCase):
    def test_solve_recovers_populations(self) -> None:
        k = 1000.0
        n = np.array([0.6, 0.3, 0.1]) * k
        b1 = forward_matrix(1, measured)[0] @ n
        b2 = forward_matrix(2, measured)[0] @ n
        assert np.allclose(solve_populations(b1, b2, k, measured), n)

    def test_correct_counts_conserves_trials(self) -> None:
        counts = TrialCounts(n_b1=560, n_d1=440, n_b2=300, n_d2=700, k=1000)
        estimate = correct_counts(counts, measured)
        assert estimate.n0 + estimate.n1 + estimate.n2 == pytest.approx(1000.0)
        assert estimate.covariance.shape == (3, 3)
        assert np.all(np.diag(estimate.covariance) >= 0.0)

    def test_singular(self) -> None:
        e = ReadoutErrors(eps_b=0.5, eps_d=0.5, eps_pi=0.5)
        with pytest.raises(SingularReadoutError):
            correction_matrix(e)

    def test_leak_warning(self) -> None:
        e = ReadoutErrors(eps_d2=0.01)
        counts = TrialCounts(n_b1=100, n_d1=9900, n_b2=100, n_d2=9900, k=10000)
        with self.assertLogs("ionlink.readout", level="WARNING"):
            estimate = correct_counts(counts, e)
        assert estimate.n2 == pytest.approx(10000.0)

    def test_counts_must_add_up(self) -> None:
        with pytest.raises(ValidationError):
            TrialCounts(n_b1=10, n_d1=10, n_b2=5, n_d2=15, k=30)


class SimulationTests(unittest.TestCase):
    def test_reproducible(self) -> None:
        a = simulate_trials(0.5, 0.4, 0.1, measured, 500, np.random.default_rng(3))
        b = simulate_trials(0.5, 0.4, 0.1, measured, 500, np.random.default_rng(3))
        assert a == b

    def test_bright_rate(self) -> None:
        c = simulate_trials(1.0, 0.0, 0.0, measured, 100_000, np.random.default_rng(5))
        assert c.n_b1 / c.k == pytest.approx(0.9841, abs=0.003)
        assert c.n_b2 / c.k == pytest.approx(0.005924, abs=0.001)

    def test_rejects_non_simplex(self) -> None:
        with pytest.raises(InvalidStateError):
            simulate_trials(0.7, 0.7, 0.0, measured, 10, np.random.default_rng(0))

    def test_single_outcome(self) -> None:
        plus = DensityMatrix(np.full((2, 2), 0.5, dtype=complex))
        rng = np.random.default_rng(11)
        none = ReadoutErrors()
        outcomes = [ion_outcome(plus, "X", none, False, 1, rng) for _ in range(20)]
        assert outcomes == ["bright"] * 20
        assert ion_outcome(plus, "X", ReadoutErrors(), True, 1, rng) == "dark"


class RotationTests(unittest.TestCase):
    def test_eigenstates_map_to_zero(self) -> None:
        plus = DensityMatrix(np.full((2, 2), 0.5, dtype=complex))
        plus_i = DensityMatrix(np.array([[0.5, -0.5j], [0.5j, 0.5]]))
        zero = DensityMatrix(np.diag([1.0, 0.0]).astype(complex))
        none = ReadoutErrors()
        assert rotated_populations(plus, "X", none) == pytest.approx((1.0, 0.0, 0.0))
        assert rotated_populations(plus_i, "Y", none) == pytest.approx((1.0, 0.0, 0.0))
        assert rotated_populations(zero, "Z", none) == pytest.approx((1.0, 0.0, 0.0))

    def test_basis_change_errors(self) -> None:
        plus = DensityMatrix(np.full((2, 2), 0.5, dtype=complex))
        p0, p1, p2 = rotated_populations(plus, "X", with_pi2)
        assert p2 == pytest.approx(0.0092)
        assert p1 == pytest.approx((1 - 0.0092) * 0.00133)
        assert p0 + p1 + p2 == pytest.approx(1.0)

    def test_leaked(self) -> None:
        plus = DensityMatrix(np.full((2, 2), 0.5, dtype=complex))
        assert rotated_populations(plus, "Y", measured, leak=True) == (0.0, 0.0, 1.0)

    def test_raman_estimate(self) -> None:
        assert raman_scattering_estimate() == pytest.approx(1 - np.sqrt(0.9865))
        quarter = raman_scattering_estimate(0.9865, np.pi / 2)
        assert quarter == pytest.approx(1 - 0.9865**0.25)
        with pytest.raises(ConfigurationError) as e:
            raman_scattering_estimate(1.5)
        assert e.value.args[0] == "Raman 2 pi fidelity must be in (0, 1], got 1.5."


@settings(max_examples=40, deadline=None)
@given(
    values=st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4),
    basis=st.sampled_from(["X", "Y", "Z"]),
    readout_pass=st.sampled_from([1, 2]),
)
def test_bright_operator_matches_populations(
    values: list[float], basis: str, readout_pass: int
) -> None:
    a, b, c, d = values
    h = np.array([[1.0 + abs(a), b + 1j * c], [b - 1j * c, 1.0 + abs(d)]])
    rho = psd_project(h)
    populations = rotated_populations(rho, basis, with_pi2)
    expected = bright_probability(populations, readout_pass, with_pi2)
    op = bright_operator(basis, readout_pass, with_pi2)
    assert np.trace(op @ rho.matrix).real == pytest.approx(expected, abs=1e-12)


class OracleTests(unittest.TestCase):
    def test_correction_within_three_sigma(self) -> None:
        rng = np.random.default_rng(2021)
        k = 1_000_000
        hits = 0
        for _ in range(100):
            p = rng.dirichlet([1.0, 1.0, 1.0])
            counts = simulate_trials(p[0], p[1], p[2], measured, k, rng)
            estimate = correct_counts(counts, measured)
            found = np.array([estimate.n0, estimate.n1, estimate.n2])
            sigma = np.sqrt(np.diag(estimate.covariance))
            hits += bool(np.all(np.abs(found - k * p) <= 3 * sigma))
        assert hits >= 95
