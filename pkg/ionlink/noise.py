"""Noise mechanisms acting on the heralded link and the composed link state."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import caseswitcher
import numpy as np

from ionlink._models import (
    IonConfig,
    NoiseToggles,
    PolarizationDrift,
    PolarizationRotation,
    ReadoutErrors,
)
from ionlink.density import (
    DensityMatrix,
    KrausChannel,
    dephase_ion,
    partial_trace,
    tensor,
)
from ionlink.obe import excitation_pdf
from ionlink.photon import (
    FiberModel,
    apply_fiber,
    arrival_phase_coherence,
    false_herald_probability,
    rotation_from,
)
from ionlink.rates import herald_probability
from ionlink.scenario import Scenario
from ionlink.source import JointLinkState, prepared_state

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Mechanism:
    """A switchable noise mechanism."""

    name: str

    @property
    def label(self) -> str:
        """Human-readable name for reports."""
        return caseswitcher.to_title(self.name)


MECHANISMS: tuple[Mechanism, ...] = tuple(
    Mechanism(name) for name in NoiseToggles.__fields__
)


def enabled_mechanisms(toggles: NoiseToggles) -> list[Mechanism]:
    """Mechanisms switched on in `toggles`."""
    return [m for m in MECHANISMS if getattr(toggles, m.name)]


def wait_coherence(ion: IonConfig) -> float:
    """Ion coherence averaged over the herald-to-readout wait distribution."""
    total = sum(w for _, w in ion.wait_us)
    return float(sum(w * np.exp(-t / ion.t2_us) for t, w in ion.wait_us) / total)


def travel_coherence(ion: IonConfig, travel_us: float) -> float:
    """Ion coherence lost while the photon travels to the analyzer."""
    return float(np.exp(-travel_us / ion.t2_us))


def ion_coherence(scenario: Scenario, toggles: NoiseToggles) -> float:
    """Product of every enabled ion-dephasing factor."""
    gamma = 1.0
    if toggles.qubit_decoherence:
        gamma *= wait_coherence(scenario.ion)
    if toggles.travel_decoherence:
        gamma *= travel_coherence(scenario.ion, scenario.timing.travel_us)
    if toggles.raman_phase_noise:
        gamma *= scenario.ion.raman_phase_coherence
    if toggles.arrival_phase:
        gamma *= arrival_phase_coherence(
            excitation_pdf(scenario.excitation),
            scenario.detector,
            scenario.ion.qubit_splitting_mhz,
        )
    return gamma


def fiber_model(scenario: Scenario, toggles: NoiseToggles) -> FiberModel:
    """Fiber with the disabled mechanisms removed."""
    update: dict = {}
    if not toggles.polarization_instability:
        update["static_rotation"] = PolarizationRotation()
        update["drift"] = PolarizationDrift()
    if not toggles.fiber_depolarization:
        update["depolarization"] = 0.0
    return FiberModel.from_config(scenario.fiber.copy(update=update))


def background_fraction(scenario: Scenario) -> float:
    """Fraction of heralds caused by detector dark counts."""
    p_dark = false_herald_probability(scenario.detector)
    if p_dark == 0.0:
        return 0.0
    return p_dark / (p_dark + herald_probability(scenario))


def effective_readout(scenario: Scenario, toggles: NoiseToggles) -> ReadoutErrors:
    """Readout error rates with the disabled mechanisms zeroed."""
    errors = scenario.readout if toggles.qubit_readout else ReadoutErrors()
    eps_pi2 = scenario.readout.eps_pi2 if toggles.pi2_pulse else 0.0
    return errors.copy(update={"eps_pi2": eps_pi2})


def link_state(
    scenario: Scenario, toggles: NoiseToggles | None = None
) -> JointLinkState:
    """Photon (x) ion state of a retained herald at readout time.

    :param scenario: Scenario.
    :param toggles: Mechanisms to apply; defaults to the scenario's.
    :return: The state with its leakage fraction.
    """
    if toggles is None:
        toggles = scenario.noise
    channel = None
    if toggles.polarization_mixing and scenario.source.polarization_mixing:
        mixing = KrausChannel.depolarizing(scenario.source.polarization_mixing)
        channel = mixing.on("photon")
    if toggles.photon_path:
        rotation = rotation_from(scenario.source.photon_path_rotation)
        path = KrausChannel.unitary(rotation).on("photon")
        channel = path if channel is None else channel.then(path)
    state = prepared_state(scenario.source.success_s, channel)
    wall_time = scenario.ion.hours_since_calibration * 3600.0
    state, _ = apply_fiber(state, fiber_model(scenario, toggles), wall_time)
    rho = dephase_ion(state.rho, ion_coherence(scenario, toggles))
    if toggles.background_counts:
        q = background_fraction(scenario)
        if q > 0.0:
            noise = tensor(DensityMatrix.maximally_mixed(2), partial_trace(rho, "ion"))
            rho = DensityMatrix((1 - q) * rho.matrix + q * noise.matrix)
    logger.debug(
        "Composed link state from %d mechanisms", len(enabled_mechanisms(toggles))
    )
    return JointLinkState(rho, state.p_leak)
