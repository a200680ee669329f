"""Module for ionlink configuration models."""
from typing import Literal

from pydantic import BaseModel, BaseSettings, Field, root_validator, validator

# Fiber group index that turns 2.8 km into 13.613 us.
DEFAULT_GROUP_INDEX = 1.4575267
SPEED_OF_LIGHT_KM_PER_S = 299_792.458
BOHR_MAGNETON_MHZ_PER_GAUSS = 1.39962449


class RuntimeSettings(BaseSettings):
    """Settings read from the environment."""

    threads: int = Field(1, ge=1)

    class Config:
        """Read `IONLINK_*` variables."""

        env_prefix = "IONLINK_"


class ReadoutErrors(BaseModel):
    """Error rates of the two-pass shelving readout."""

    eps_b: float = Field(0.0, ge=0.0, le=1.0)
    eps_d: float = Field(0.0, ge=0.0, le=1.0)
    eps_d2: float = Field(0.0, ge=0.0, le=1.0)
    eps_s: float = Field(0.0, ge=0.0, le=1.0)
    eps_pi: float = Field(0.0, ge=0.0, le=1.0)
    # Bit-flip probability of a basis-change pi/2 pulse.
    eps_pi2: float = Field(0.0, ge=0.0, le=1.0)

    @classmethod
    def measured(cls) -> "ReadoutErrors":
        """Error rates characterized for the 4D3/2 qubit readout."""
        return cls(eps_b=0.0159, eps_d=0.005, eps_d2=0.0, eps_s=0.0092, eps_pi=0.001)


class WaveplateSetting(BaseModel):
    """A retarder: retardance and fast-axis angle, both in radians."""

    retardance: float
    angle: float

    class Config:
        """Settings are hashable values."""

        frozen = True


class PolarizationRotation(BaseModel):
    """Rotation of the polarization qubit about a Poincare-sphere axis."""

    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    angle: float = 0.0

    @validator("axis")
    def _axis_nonzero(
        cls, value: tuple[float, float, float]
    ) -> tuple[float, float, float]:
        if sum(c * c for c in value) == 0.0:
            raise ValueError("rotation axis must be nonzero")
        return value


class PolarizationDrift(BaseModel):
    """Slow fiber drift: rotation angle growing linearly in wall-clock time."""

    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    rate_rad_per_hour: float = 0.0

    @validator("axis")
    def _axis_nonzero(
        cls, value: tuple[float, float, float]
    ) -> tuple[float, float, float]:
        if sum(c * c for c in value) == 0.0:
            raise ValueError("drift axis must be nonzero")
        return value


class FiberConfig(BaseModel):
    """Fiber between the ion trap and the polarization analyzer."""

    length_km: float = Field(0.0, ge=0.0)
    attenuation_db_per_km: float = Field(0.0, ge=0.0)
    extra_loss: float = Field(1.0, ge=0.0, le=1.0)
    group_index: float = Field(DEFAULT_GROUP_INDEX, gt=0.0)
    static_rotation: PolarizationRotation = Field(default_factory=PolarizationRotation)
    drift: PolarizationDrift = Field(default_factory=PolarizationDrift)
    depolarization: float = Field(0.0, ge=0.0, le=1.0)


class DetectorModel(BaseModel):
    """Single-photon detector pair behind the polarizing splitter."""

    efficiency: float = Field(1.0, ge=0.0, le=1.0)
    dark_count_rate: float = Field(0.0, ge=0.0)
    window_ns: tuple[float, float] = (0.0, 20.0)

    @validator("window_ns")
    def _window_ordered(cls, value: tuple[float, float]) -> tuple[float, float]:
        if not value[0] < value[1]:
            raise ValueError("detection window must satisfy t_i < t_f")
        return value

    @property
    def window_length_ns(self) -> float:
        """Length of the detection window."""
        return self.window_ns[1] - self.window_ns[0]


class RateFactors(BaseModel):
    """Factors of the heralding probability."""

    p_p: float = Field(0.056, ge=0.0, le=1.0)
    p_c: float = Field(0.021, ge=0.0, le=1.0)
    p_q: float = Field(0.8, ge=0.0, le=1.0)
    # Unset: captured from the default emission density over the detector window.
    p_w: float | None = Field(None, ge=0.0, le=1.0)
    # Collection-path breakdown; documentation only, P_c P_q is authoritative.
    solid_angle: float | None = Field(None, ge=0.0, le=1.0)
    optics: float | None = Field(None, ge=0.0, le=1.0)
    coupling: float | None = Field(None, ge=0.0, le=1.0)


class TimingBudget(BaseModel):
    """Durations of one entanglement attempt and the surrounding loop, in us."""

    pump_us: float = Field(1.0, ge=0.0)
    excite_us: float = Field(0.018, ge=0.0)
    margin_us: float = Field(0.618, ge=0.0)
    latency_us: float = Field(0.5, ge=0.0)
    travel_us: float = Field(0.0, ge=0.0)
    cooling_period: int = Field(50, ge=1)
    cooling_duration_us: float = Field(0.0, ge=0.0)
    readout_us: float = Field(0.0, ge=0.0)
    leakage_fraction: float = Field(0.0, ge=0.0, le=1.0)

    @property
    def body_us(self) -> float:
        """Pump, excitation and margins of one attempt."""
        return self.pump_us + self.excite_us + self.margin_us

    @property
    def attempt_us(self) -> float:
        """Full period of one attempt, cooling excluded."""
        return self.body_us + self.latency_us + self.travel_us


class NoiseToggles(BaseModel):
    """Switches for every noise mechanism of the link pipeline."""

    polarization_mixing: bool = True
    qubit_decoherence: bool = True
    qubit_readout: bool = True
    photon_path: bool = True
    pi2_pulse: bool = True
    background_counts: bool = True
    raman_phase_noise: bool = True
    polarization_instability: bool = True
    fiber_depolarization: bool = True
    travel_decoherence: bool = True
    arrival_phase: bool = False

    def only(self, name: str) -> "NoiseToggles":
        """Copy with every mechanism off except `name`."""
        return NoiseToggles(**{field: field == name for field in self.__fields__})

    def without(self, name: str) -> "NoiseToggles":
        """Copy with `name` switched off."""
        return self.copy(update={name: False})

    @classmethod
    def none(cls) -> "NoiseToggles":
        """Every mechanism off."""
        return cls(**{field: False for field in cls.__fields__})


class SourceConfig(BaseModel):
    """Ion-photon source imperfections."""

    # Probability S that emission came from the desired excited sublevel.
    success_s: float = Field(1.0, ge=0.0, le=1.0)
    # Photon-only depolarizing probability from imaging-system birefringence.
    polarization_mixing: float = Field(0.0, ge=0.0, le=1.0)
    photon_path_rotation: PolarizationRotation = Field(
        default_factory=PolarizationRotation
    )


class IonConfig(BaseModel):
    """Ion memory between emission and readout."""

    t2_us: float = Field(1360.0, gt=0.0)
    # Herald-to-readout waits as (duration us, weight) pairs.
    wait_us: list[tuple[float, float]] = Field(default_factory=lambda: [(0.0, 1.0)])
    raman_phase_coherence: float = Field(1.0, ge=0.0, le=1.0)
    qubit_splitting_mhz: float = Field(0.0, ge=0.0)
    hours_since_calibration: float = Field(0.0, ge=0.0)

    @validator("wait_us")
    def _wait_weights(
        cls, value: list[tuple[float, float]]
    ) -> list[tuple[float, float]]:
        if not value:
            raise ValueError("wait distribution needs at least one entry")
        if any(t < 0.0 or w < 0.0 for t, w in value):
            raise ValueError("wait durations and weights must be nonnegative")
        if sum(w for _, w in value) <= 0.0:
            raise ValueError("wait weights must not all be zero")
        return value


class RateConfig(BaseModel):
    """Heralding factors and the measured success probability."""

    factors: RateFactors = Field(default_factory=RateFactors)
    measured_success_probability: float | None = Field(None, ge=0.0, le=1.0)
    # Measured with a 3 ns window; the prediction comes from the emission density.
    measured_3ns_success_probability: float | None = Field(None, ge=0.0, le=1.0)


class EnvelopeConfig(BaseModel):
    """Rise/hold/fall pulse profile in ns with sine-squared edges."""

    delay_ns: float = Field(0.0, ge=0.0)
    rise_ns: float = Field(2.0, ge=0.0)
    hold_ns: float = Field(10.5, ge=0.0)
    fall_ns: float = Field(2.0, ge=0.0)


class ManifoldConfig(BaseModel):
    """A fine-structure level split into Zeeman sublevels."""

    label: str
    j: float = Field(..., ge=0.0)
    g_j: float = 0.0
    lifetime_us: float | None = Field(None, gt=0.0)

    @validator("j")
    def _half_integer(cls, value: float) -> float:
        if abs(2 * value - round(2 * value)) > 1e-12:
            raise ValueError("angular momentum must be a half-integer")
        return value


class DecayConfig(BaseModel):
    """Spontaneous decay channel between two manifolds."""

    upper: str
    lower: str
    branching: float = Field(..., ge=0.0, le=1.0)
    rank: int = Field(1, ge=0, le=2)


class BeamConfig(BaseModel):
    """A laser driving one manifold-to-manifold transition."""

    name: str
    lower: str
    upper: str
    rabi_mhz: float = Field(..., ge=0.0)
    detuning_mhz: float = 0.0
    # Power fractions (sigma+, pi, sigma-).
    polarization: tuple[float, float, float] = (0.0, 0.0, 1.0)
    rank: int = Field(1, ge=0, le=1)
    envelope: EnvelopeConfig | None = None

    @validator("polarization")
    def _fractions(
        cls, value: tuple[float, float, float]
    ) -> tuple[float, float, float]:
        if any(f < 0.0 for f in value):
            raise ValueError("polarization fractions must be nonnegative")
        if abs(sum(value) - 1.0) > 1e-9:
            raise ValueError("polarization fractions must sum to 1")
        return value

    def with_polarization_error(self, target: int, error: float) -> "BeamConfig":
        """Copy whose `target` component (+1, 0, -1) leaks `error` into pi.

        A misaligned circular beam picks up a pi component; a pi beam
        leaks equally into both circular components.
        """
        if target == 0:
            pol = (error / 2, 1.0 - error, error / 2)
        elif target == 1:
            pol = (1.0 - error, error, 0.0)
        else:
            pol = (0.0, error, 1.0 - error)
        return self.copy(update={"polarization": pol})


class LevelSystemConfig(BaseModel):
    """Manifolds, decay channels and magnetic field of an atom."""

    manifolds: list[ManifoldConfig]
    decays: list[DecayConfig] = Field(default_factory=list)
    b_field_gauss: float = 0.0

    @root_validator(skip_on_failure=True)
    def _consistent(cls, values: dict) -> dict:
        labels = [m.label for m in values["manifolds"]]
        if len(set(labels)) != len(labels):
            raise ValueError("manifold labels must be unique")
        by_label = {m.label: m for m in values["manifolds"]}
        totals: dict[str, float] = {}
        for decay in values["decays"]:
            for label in (decay.upper, decay.lower):
                if label not in by_label:
                    raise ValueError(f'decay references unknown manifold "{label}"')
            if by_label[decay.upper].lifetime_us is None:
                raise ValueError(f'decaying manifold "{decay.upper}" needs a lifetime')
            totals[decay.upper] = totals.get(decay.upper, 0.0) + decay.branching
        for label, total in totals.items():
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f'branching fractions of "{label}" sum to {total}')
        return values


def strontium_excitation_system(b_field_gauss: float = 3.0) -> LevelSystemConfig:
    """S1/2, P1/2 and D3/2 of 88Sr+."""
    return LevelSystemConfig(
        manifolds=[
            ManifoldConfig(label="S1/2", j=0.5, g_j=2.0023),
            ManifoldConfig(label="P1/2", j=0.5, g_j=2 / 3, lifetime_us=7.39e-3),
            ManifoldConfig(label="D3/2", j=1.5, g_j=0.8, lifetime_us=435e3),
        ],
        decays=[
            DecayConfig(upper="P1/2", lower="S1/2", branching=0.944),
            DecayConfig(upper="P1/2", lower="D3/2", branching=0.056),
            DecayConfig(upper="D3/2", lower="S1/2", branching=1.0, rank=2),
        ],
        b_field_gauss=b_field_gauss,
    )


def strontium_shelving_system(b_field_gauss: float = 3.0) -> LevelSystemConfig:
    """S1/2, D3/2, D5/2 and P3/2 of 88Sr+."""
    return LevelSystemConfig(
        manifolds=[
            ManifoldConfig(label="S1/2", j=0.5, g_j=2.0023),
            ManifoldConfig(label="D3/2", j=1.5, g_j=0.8, lifetime_us=435e3),
            ManifoldConfig(label="D5/2", j=2.5, g_j=1.2, lifetime_us=395e3),
            ManifoldConfig(label="P3/2", j=1.5, g_j=4 / 3, lifetime_us=6.63e-3),
        ],
        decays=[
            DecayConfig(upper="P3/2", lower="S1/2", branching=0.9406),
            DecayConfig(upper="P3/2", lower="D5/2", branching=0.0523),
            DecayConfig(upper="P3/2", lower="D3/2", branching=0.0071),
            DecayConfig(upper="D3/2", lower="S1/2", branching=1.0, rank=2),
            DecayConfig(upper="D5/2", lower="S1/2", branching=1.0, rank=2),
        ],
        b_field_gauss=b_field_gauss,
    )


def _excitation_beam() -> BeamConfig:
    return BeamConfig(
        name="422",
        lower="S1/2",
        upper="P1/2",
        rabi_mhz=29.5,
        detuning_mhz=-5.6,
        # Fitted pi impurity 0.0088 is relative to the sigma- line strength; the
        # pi line from S1/2(+1/2) is half as strong, so its power share doubles.
        polarization=(0.0, 0.0176, 0.9824),
        envelope=EnvelopeConfig(),
    )


class EmissionConfig(BaseModel):
    """Which decay feeds the heralding photon and which sublevel is desired."""

    upper: str = "P1/2"
    lower: str = "D3/2"
    desired_m: float = -0.5


class ExcitationConfig(BaseModel):
    """Excitation-pulse simulation producing the emission-time density."""

    system: LevelSystemConfig = Field(default_factory=strontium_excitation_system)
    beam: BeamConfig = Field(default_factory=_excitation_beam)
    initial_manifold: str = "S1/2"
    initial_m: float = 0.5
    # Population left in the other ground sublevel by imperfect pumping.
    pumping_error: float = Field(0.0, ge=0.0, le=1.0)
    t_end_ns: float = Field(60.0, gt=0.0)
    step_ns: float = Field(0.05, gt=0.0)
    emission: EmissionConfig = Field(default_factory=EmissionConfig)


class ShelvingConfig(BaseModel):
    """Electron-shelving simulation with 408 nm and 1004 nm beams."""

    system: LevelSystemConfig = Field(default_factory=strontium_shelving_system)
    rabi_408_mhz: float = Field(20.0, ge=0.0)
    rabi_1004_mhz: float = Field(10.0, ge=0.0)
    detuning_408_mhz: float = 0.0
    pol_error_408: float = Field(0.0, ge=0.0, le=1.0)
    # Shelving-time grid (start us, stop us, points).
    time_grid_us: tuple[float, float, int] = (0.1, 10.0, 100)
    # Fluorescence detection time during which D5/2 may decay back.
    detection_time_us: float = Field(300.0, ge=0.0)
    step_us: float | None = Field(None, gt=0.0)

    @validator("time_grid_us")
    def _grid(cls, value: tuple[float, float, int]) -> tuple[float, float, int]:
        if not 0.0 < value[0] <= value[1] or value[2] < 1:
            raise ValueError("time grid must satisfy 0 < start <= stop, points >= 1")
        return value


class CalibrationModel(BaseModel):
    """Model a polarization-error calibration scan is fitted against."""

    kind: Literal["shelving", "excitation"] = "shelving"
    # Handedness of the 422 nm beam for excitation calibrations: +1 or -1.
    handedness: Literal[1, -1] = -1
    shelving: ShelvingConfig = Field(default_factory=ShelvingConfig)
    excitation: ExcitationConfig = Field(default_factory=ExcitationConfig)
    # Points before the AOM rise time are not fitted.
    rise_time_us: float = Field(0.05, ge=0.0)
    max_iterations: int = Field(200, ge=1)
