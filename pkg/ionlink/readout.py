"""Two-pass electron-shelving readout of the ion qubit.

Populations are ordered (n0, n1, n2): qubit |0>, qubit |1> and everything
that has left the qubit manifold. Pass 1 shelves |1> and reads |0> bright;
pass 2 first swaps the qubit states with a Raman pi pulse. Forward
matrices have rows (bright, dark, total).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, Field, root_validator

from ionlink._models import ReadoutErrors
from ionlink._types import ComplexMatrix, IonBasis, Outcome, ReadoutPass
from ionlink.density import DensityMatrix
from ionlink.errors import (
    ConfigurationError,
    DimensionMismatchError,
    InvalidStateError,
    SingularReadoutError,
)

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12
SIMPLEX_TOL = 1e-9
RAMAN_TWO_PI_FIDELITY = 0.9865

# Basis-change pulses mapping |+> and |+i> onto |0>.
ION_ROTATIONS: dict[str, ComplexMatrix] = {
    "Z": np.eye(2, dtype=complex),
    "X": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "Y": np.array([[1, -1j], [1, 1j]], dtype=complex) / np.sqrt(2),
}


class TrialCounts(BaseModel):
    """Bright and dark counts of both readout passes."""

    n_b1: int = Field(..., ge=0)
    n_d1: int = Field(..., ge=0)
    n_b2: int = Field(..., ge=0)
    n_d2: int = Field(..., ge=0)
    k: int = Field(..., ge=1)

    @root_validator(skip_on_failure=True)
    def _passes_complete(cls, values: dict) -> dict:
        k = values["k"]
        if values["n_b1"] + values["n_d1"] != k or values["n_b2"] + values["n_d2"] != k:
            raise ValueError("bright plus dark counts must equal k in each pass")
        return values


@dataclass(frozen=True)
class PopulationEstimate:
    """Readout-corrected populations and their covariance."""

    n0: float
    n1: float
    n2: float
    covariance: np.ndarray


def _pass_one(e: ReadoutErrors) -> np.ndarray:
    return np.array(
        [
            [1 - e.eps_b, e.eps_d, e.eps_d2],
            [e.eps_b, 1 - e.eps_d, 1 - e.eps_d2],
        ]
    )


def forward_matrix(readout_pass: ReadoutPass, e: ReadoutErrors) -> np.ndarray:
    """Map from populations (n0, n1, n2) to (bright, dark, total) counts.

    :param readout_pass: 1 or 2.
    :param e: Readout error rates.
    :return: 3x3 matrix; bright plus dark columns sum to 1.
    """
    first = _pass_one(e)
    if readout_pass == 1:
        return np.vstack([first, np.ones(3)])
    if readout_pass != 2:
        raise ConfigurationError(f"Readout pass must be 1 or 2, got {readout_pass}.")
    flip = np.array(
        [
            [e.eps_pi, 1 - e.eps_pi, 0.0],
            [1 - e.eps_pi, e.eps_pi, 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    scatter = np.array(
        [
            [1 - e.eps_s, 0.0, 0.0],
            [0.0, 1 - e.eps_s, 0.0],
            [e.eps_s, e.eps_s, 1.0],
        ]
    )
    second = first @ scatter @ flip
    # Scattered population read bright through eps_d2 is neglected.
    cross = e.eps_d2 * e.eps_s
    second[0, :2] -= cross
    second[1, :2] += cross
    return np.vstack([second, np.ones(3)])


def bright_probability(
    populations: tuple[float, float, float], readout_pass: ReadoutPass, e: ReadoutErrors
) -> float:
    """Probability of a bright pass given (p0, p1, p2)."""
    bright = forward_matrix(readout_pass, e)[0]
    return float(bright @ np.asarray(populations, dtype=float))


def _check_simplex(p: tuple[float, float, float]) -> None:
    if min(p) < -SIMPLEX_TOL or abs(sum(p) - 1.0) > SIMPLEX_TOL:
        raise InvalidStateError(f"populations {p} are not a probability vector")


def simulate_trials(
    p0: float, p1: float, p2: float, e: ReadoutErrors, k: int, rng: np.random.Generator
) -> TrialCounts:
    """Draw both passes of `k` trials each.

    :param p0: Population of |0>.
    :param p1: Population of |1>.
    :param p2: Population outside the qubit.
    :param e: Readout error rates.
    :param k: Trials per pass.
    :param rng: Random stream owned by the caller.
    :return: The counts.
    """
    populations = (p0, p1, p2)
    _check_simplex(populations)
    p1 = min(max(bright_probability(populations, 1, e), 0.0), 1.0)
    p2 = min(max(bright_probability(populations, 2, e), 0.0), 1.0)
    n_b1 = int(rng.binomial(k, p1))
    n_b2 = int(rng.binomial(k, p2))
    return TrialCounts(n_b1=n_b1, n_d1=k - n_b1, n_b2=n_b2, n_d2=k - n_b2, k=k)


def correction_matrix(e: ReadoutErrors) -> np.ndarray:
    """Rows (pass-1 bright, pass-2 bright, total) acting on (n0, n1, n2)."""
    m = np.vstack([forward_matrix(1, e)[0], forward_matrix(2, e)[0], np.ones(3)])
    condition = float(np.linalg.cond(m))
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise SingularReadoutError(condition)
    return m


def solve_populations(
    bright_1: float, bright_2: float, k: float, e: ReadoutErrors
) -> np.ndarray:
    """Solve the readout system for (n0, n1, n2); counts may be fractional."""
    return np.linalg.solve(correction_matrix(e), np.array([bright_1, bright_2, k]))


def correct_counts(c: TrialCounts, e: ReadoutErrors) -> PopulationEstimate:
    """Invert the readout for both passes' bright counts.

    :param c: Observed counts.
    :param e: Readout error rates.
    :return: Population estimate with first-order multinomial covariance.
    """
    m = correction_matrix(e)
    inverse = np.linalg.inv(m)
    n = inverse @ np.array([c.n_b1, c.n_b2, c.k], dtype=float)
    p1, p2 = c.n_b1 / c.k, c.n_b2 / c.k
    noise = np.diag([c.k * p1 * (1 - p1), c.k * p2 * (1 - p2), 0.0])
    covariance = inverse @ noise @ inverse.T
    if e.eps_d2 * max(n[2], 0.0) >= 1.0:
        logger.warning(
            "eps_d2 * n2 = %.3g; leaked population is not negligible", e.eps_d2 * n[2]
        )
    return PopulationEstimate(float(n[0]), float(n[1]), float(n[2]), covariance)


def rotated_populations(
    rho_ion: DensityMatrix, basis: IonBasis, e: ReadoutErrors, leak: bool = False
) -> tuple[float, float, float]:
    """(p0, p1, p2) after the basis-change pulse and its errors.

    :param rho_ion: Ion qubit state.
    :param basis: Measurement basis.
    :param e: Readout error rates; eps_s scatters and eps_pi2 flips on X and Y.
    :param leak: Whether the trial already left the qubit manifold.
    :return: Populations entering the shelving sequence.
    """
    if rho_ion.dim != 2:
        raise DimensionMismatchError(2, rho_ion.dim)
    if leak:
        return 0.0, 0.0, 1.0
    u = ION_ROTATIONS[basis]
    rotated = u @ rho_ion.matrix @ u.conj().T
    p0, p1 = float(rotated[0, 0].real), float(rotated[1, 1].real)
    if basis == "Z":
        return p0, p1, 0.0
    flip = e.eps_pi2
    p0, p1 = (1 - flip) * p0 + flip * p1, (1 - flip) * p1 + flip * p0
    kept = 1 - e.eps_s
    return kept * p0, kept * p1, e.eps_s


def ion_outcome(
    rho_ion: DensityMatrix,
    basis: IonBasis,
    e: ReadoutErrors,
    leak: bool,
    readout_pass: ReadoutPass,
    rng: np.random.Generator,
) -> Outcome:
    """Single-shot readout of the ion in `basis`.

    :param rho_ion: Ion qubit state.
    :param basis: Measurement basis.
    :param e: Readout error rates.
    :param leak: Whether the trial left the qubit manifold.
    :param readout_pass: 1 or 2.
    :param rng: Random stream owned by the caller.
    :return: "bright" or "dark".
    """
    populations = rotated_populations(rho_ion, basis, e, leak)
    p = bright_probability(populations, readout_pass, e)
    return "bright" if rng.random() < p else "dark"


def raman_scattering_estimate(
    two_pi_fidelity: float = RAMAN_TWO_PI_FIDELITY, pulse_area: float = np.pi
) -> float:
    """Scattering probability of one Raman pulse from a 2 pi rotation fidelity.

    :param two_pi_fidelity: Measured fidelity of a full 2 pi rotation.
    :param pulse_area: Area of the pulse of interest in radians.
    :return: 1 - F^(area / 2 pi).
    """
    if not 0.0 < two_pi_fidelity <= 1.0:
        raise ConfigurationError(
            f"Raman 2 pi fidelity must be in (0, 1], got {two_pi_fidelity}."
        )
    return float(1.0 - two_pi_fidelity ** (pulse_area / (2 * np.pi)))


def ion_projectors(basis: IonBasis) -> tuple[ComplexMatrix, ComplexMatrix]:
    """Projectors onto the states the basis-change pulse maps to |0> and |1>."""
    u = ION_ROTATIONS[basis]
    zero, one = u.conj().T[:, 0], u.conj().T[:, 1]
    return np.outer(zero, zero.conj()), np.outer(one, one.conj())


def bright_operator(
    basis: IonBasis, readout_pass: ReadoutPass, e: ReadoutErrors
) -> ComplexMatrix:
    """Ion-qubit POVM element of a bright pass, including every readout error.

    :param basis: Measurement basis.
    :param readout_pass: 1 or 2.
    :param e: Readout error rates.
    :return: B with Tr(B rho) equal to the bright probability of a qubit trial.
    """
    f0, f1, f2 = forward_matrix(readout_pass, e)[0]
    zero, one = ion_projectors(basis)
    if basis == "Z":
        return f0 * zero + f1 * one
    flip = e.eps_pi2
    kept = 1 - e.eps_s
    p0 = kept * ((1 - flip) * zero + flip * one)
    p1 = kept * ((1 - flip) * one + flip * zero)
    return f0 * p0 + f1 * p1 + e.eps_s * f2 * np.eye(2)
