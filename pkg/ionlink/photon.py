"""Polarization-qubit optics, fiber transmission and detection windows.

Jones convention: |R> = (|H> - i|V>) / sqrt(2); a retarder at fast-axis
angle θ with retardance δ is R(-θ) diag(1, e^{iδ}) R(θ).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ionlink._models import (
    SPEED_OF_LIGHT_KM_PER_S,
    DetectorModel,
    FiberConfig,
    PolarizationRotation,
    WaveplateSetting,
)
from ionlink._types import ComplexMatrix, PhotonBasis
from ionlink.density import PAULI_I, PAULI_X, PAULI_Y, PAULI_Z, KrausChannel
from ionlink.errors import ConfigurationError, ParameterRangeError
from ionlink.source import EmissionTimePDF, JointLinkState, window_integral

logger = logging.getLogger(__name__)

HALF_WAVE = np.pi
QUARTER_WAVE = np.pi / 2

# Observables measured by the H port minus the V port after each analysis setting.
PHOTON_OBSERVABLES: dict[str, ComplexMatrix] = {
    "H": PAULI_Z,
    "D": PAULI_X,
    "R": -PAULI_Y,
}


def _rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]], dtype=complex)


def waveplate_unitary(w: WaveplateSetting) -> ComplexMatrix:
    """Jones matrix of a retarder.

    :param w: Retardance and fast-axis angle in radians.
    :return: 2x2 unitary.
    """
    retarder = np.diag([1.0, np.exp(1j * w.retardance)])
    return _rotation(-w.angle) @ retarder @ _rotation(w.angle)


def quarter_wave(angle: float) -> WaveplateSetting:
    """Quarter-wave plate at `angle` radians."""
    return WaveplateSetting(retardance=QUARTER_WAVE, angle=angle)


def half_wave(angle: float) -> WaveplateSetting:
    """Half-wave plate at `angle` radians."""
    return WaveplateSetting(retardance=HALF_WAVE, angle=angle)


def analysis_setting(basis: PhotonBasis) -> list[WaveplateSetting]:
    """Quarter, half and quarter-wave plates sending `basis` to the H port.

    :param basis: "H", "D" or "R".
    :return: Plates in the order the photon meets them.
    """
    if basis == "H":
        return [quarter_wave(0.0), half_wave(0.0), quarter_wave(0.0)]
    if basis == "D":
        return [quarter_wave(np.pi / 4), half_wave(np.pi / 8), quarter_wave(0.0)]
    if basis == "R":
        return [quarter_wave(3 * np.pi / 4), half_wave(0.0), quarter_wave(0.0)]
    raise ConfigurationError(f'Unknown photon analysis basis "{basis}".')


def analysis_unitary(basis: PhotonBasis) -> ComplexMatrix:
    """Composite Jones matrix of `analysis_setting(basis)`."""
    u = np.eye(2, dtype=complex)
    for plate in analysis_setting(basis):
        u = waveplate_unitary(plate) @ u
    return u


def rotation_unitary(axis: tuple[float, float, float], angle: float) -> ComplexMatrix:
    """exp(-i angle/2 n.sigma) with n weighting (sigma_x, sigma_y, sigma_z) in {H, V}.

    :param axis: Rotation axis, normalized here.
    :param angle: Rotation angle in radians.
    :return: 2x2 unitary.
    """
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    generator = n[0] * PAULI_X + n[1] * PAULI_Y + n[2] * PAULI_Z
    return np.cos(angle / 2) * PAULI_I - 1j * np.sin(angle / 2) * generator


def rotation_from(config: PolarizationRotation) -> ComplexMatrix:
    """Unitary of a configured rotation."""
    return rotation_unitary(config.axis, config.angle)


def fiber_survival(length: float, attenuation: float, extra_loss: float = 1.0) -> float:
    """Transmission 10^(-length * attenuation / 10) * extra_loss.

    :param length: Fiber length in km.
    :param attenuation: Loss in dB/km.
    :param extra_loss: Additional transmission factor for splices and bends.
    :return: Survival probability.
    """
    for name, value in (("length", length), ("attenuation", attenuation)):
        if value < 0.0:
            raise ParameterRangeError(name, value, 0.0)
    if not 0.0 <= extra_loss <= 1.0:
        raise ParameterRangeError("extra_loss", extra_loss, 0.0, 1.0)
    return float(10 ** (-length * attenuation / 10) * extra_loss)


def fiber_latency(length: float, group_index: float) -> float:
    """One-way travel time in us."""
    if length < 0.0:
        raise ParameterRangeError("length", length, 0.0)
    if group_index <= 0.0:
        raise ParameterRangeError("group_index", group_index, 0.0)
    return length * group_index / SPEED_OF_LIGHT_KM_PER_S * 1e6


@dataclass(frozen=True)
class FiberModel:
    """Fiber built from a `FiberConfig` with its unitaries precomputed."""

    length_km: float
    attenuation_db_per_km: float
    extra_loss: float
    group_index: float
    static: ComplexMatrix
    drift_axis: tuple[float, float, float]
    drift_rate_rad_per_hour: float
    depolarization: float

    @classmethod
    def from_config(cls, config: FiberConfig) -> FiberModel:
        """Build from configuration."""
        return cls(
            length_km=config.length_km,
            attenuation_db_per_km=config.attenuation_db_per_km,
            extra_loss=config.extra_loss,
            group_index=config.group_index,
            static=rotation_from(config.static_rotation),
            drift_axis=config.drift.axis,
            drift_rate_rad_per_hour=config.drift.rate_rad_per_hour,
            depolarization=config.depolarization,
        )

    @classmethod
    def identity(cls) -> FiberModel:
        """Lossless, noiseless zero-length fiber."""
        return cls.from_config(FiberConfig())

    def drift(self, wall_time: float) -> ComplexMatrix:
        """Drift unitary after `wall_time` seconds since calibration."""
        return rotation_unitary(
            self.drift_axis, self.drift_rate_rad_per_hour * wall_time / 3600.0
        )

    @property
    def survival(self) -> float:
        """Transmission of the fiber."""
        return fiber_survival(
            self.length_km, self.attenuation_db_per_km, self.extra_loss
        )

    @property
    def latency_us(self) -> float:
        """One-way travel time."""
        return fiber_latency(self.length_km, self.group_index)


def apply_fiber(
    state: JointLinkState, model: FiberModel, wall_time: float = 0.0
) -> tuple[JointLinkState, float]:
    """Send the photon of a link state through the fiber.

    :param state: Photon (x) ion state.
    :param model: Fiber.
    :param wall_time: Seconds since the polarization was calibrated.
    :return: The transformed state and the survival probability.
    """
    channel = KrausChannel.unitary(model.drift(wall_time) @ model.static)
    if model.depolarization:
        channel = channel.then(KrausChannel.depolarizing(model.depolarization))
    rho = channel.on("photon").apply(state.rho)
    return JointLinkState(rho, state.p_leak), model.survival


def window_capture(pdf: EmissionTimePDF, det: DetectorModel) -> float:
    """Fraction of the emission density inside the detection window."""
    t_i, t_f = det.window_ns
    return min(window_integral(pdf.t_ns, pdf.density, t_i, t_f), 1.0)


def arrival_phase_coherence(
    pdf: EmissionTimePDF, det: DetectorModel, qubit_splitting: float
) -> float:
    """Residual ion coherence after averaging the arrival-time phase.

    :param pdf: Emission density over ns.
    :param det: Detector holding the window.
    :param qubit_splitting: Ion qubit splitting in MHz.
    :return: |<exp(i 2 pi f t)>| over the windowed density.
    """
    t_i, t_f = det.window_ns
    phase = 2 * np.pi * qubit_splitting * 1e-3 * pdf.t_ns
    density = pdf.density
    total = window_integral(pdf.t_ns, density, t_i, t_f)
    if total <= 0.0:
        return 1.0
    re = window_integral(pdf.t_ns, density * np.cos(phase), t_i, t_f)
    im = window_integral(pdf.t_ns, density * np.sin(phase), t_i, t_f)
    return float(min(np.hypot(re, im) / total, 1.0))


def false_herald_probability(det: DetectorModel) -> float:
    """Probability of at least one dark count inside one detection window."""
    return float(-np.expm1(-det.dark_count_rate * det.window_length_ns * 1e-9))
