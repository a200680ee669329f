"""Lindblad master-equation solver for multi-level ions.

Populations evolve under dρ/dt = -i[H, ρ] + Σ_k (L_k ρ L_k† - ½{L_k†L_k, ρ})
in the rotating frame of the applied beams. The density matrix is
flattened row-major, so the generator acts as an n² × n² matrix and one
fixed-size fourth-order Runge-Kutta step is the matrix polynomial
Σ_{k≤4} (hL)^k / k!. Time-independent runs raise that step to a power;
pulsed runs take explicit steps.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from ionlink._models import (
    BeamConfig,
    CalibrationModel,
    EnvelopeConfig,
    ExcitationConfig,
    ShelvingConfig,
)
from ionlink._types import ComplexMatrix, RealArray
from ionlink.errors import (
    ConvergenceError,
    ParameterRangeError,
    StepSizeError,
    UnknownTransitionError,
)
from ionlink.levels import LevelSystem
from ionlink.source import EmissionTimePDF

logger = logging.getLogger(__name__)

STEP_SAFETY = 0.01
HALVING_TOL = 1e-6
# Mean squared residual at solver precision.
RESIDUAL_FLOOR = 1e-18
QUBIT_ZERO = ("D3/2", -1.5)
QUBIT_ONE = ("D3/2", 0.5)


def envelope_value(envelope: EnvelopeConfig | None, t_us: float) -> float:
    """Pulse amplitude in [0, 1] at time `t_us`.

    :param envelope: Rise/hold/fall profile, `None` for a constant beam.
    :param t_us: Time since the sequence start in us.
    :return: Amplitude scale factor.
    """
    if envelope is None:
        return 1.0
    t = t_us * 1e3 - envelope.delay_ns
    if t < 0.0:
        return 0.0
    if t < envelope.rise_ns:
        return float(np.sin(0.5 * np.pi * t / envelope.rise_ns) ** 2)
    t -= envelope.rise_ns
    if t < envelope.hold_ns:
        return 1.0
    t -= envelope.hold_ns
    if t < envelope.fall_ns:
        return float(np.cos(0.5 * np.pi * t / envelope.fall_ns) ** 2)
    return 0.0


def _commutator_superop(h: ComplexMatrix) -> ComplexMatrix:
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def _dissipator_superop(ops: Sequence[ComplexMatrix], dim: int) -> ComplexMatrix:
    eye = np.eye(dim)
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    for op in ops:
        ldl = op.conj().T @ op
        out += np.kron(op, op.conj())
        out -= 0.5 * (np.kron(ldl, eye) + np.kron(eye, ldl.T))
    return out


class LindbladGenerator:
    """Superoperator of a level system driven by a set of beams."""

    def __init__(self, system: LevelSystem, beams: Sequence[BeamConfig]) -> None:
        """Assemble static and envelope-modulated parts.

        :param system: Sublevel structure and decays.
        :param beams: Applied beams.
        """
        self.system = system
        self.beams = list(beams)
        n = system.dim
        bare = system.bare_hamiltonian(self.beams)
        static_h = bare.copy()
        self.modulated: list[tuple[EnvelopeConfig, ComplexMatrix]] = []
        for beam in self.beams:
            h = system.beam_hamiltonian(beam)
            if beam.envelope is None:
                static_h += h
            else:
                self.modulated.append((beam.envelope, _commutator_superop(h)))
        self.static = _commutator_superop(static_h) + _dissipator_superop(
            [c.operator for c in system.decays], n
        )
        omega = max((2 * np.pi * b.rabi_mhz for b in self.beams), default=0.0)
        gamma = max((system.decay_rate(m) for m in system.manifolds), default=0.0)
        delta = float(np.max(np.abs(np.diag(bare)))) if n else 0.0
        self.rate_scale = max(omega, gamma, delta)

    @property
    def constant(self) -> bool:
        """Whether the generator is time independent."""
        return not self.modulated

    @property
    def max_step(self) -> float:
        """Largest permitted step in us."""
        return STEP_SAFETY / self.rate_scale if self.rate_scale > 0 else np.inf

    def at(self, t_us: float) -> ComplexMatrix:
        """Superoperator at time `t_us`."""
        out = self.static
        for envelope, part in self.modulated:
            scale = envelope_value(envelope, t_us)
            if scale:
                out = out + scale * part
        return out


def build_generator(
    system: LevelSystem, beams: Sequence[BeamConfig], t: float
) -> ComplexMatrix:
    """Lindblad superoperator acting on row-major flattened density matrices.

    :param system: Level system.
    :param beams: Applied beams.
    :param t: Time in us at which envelopes are evaluated.
    :return: The n² × n² generator.
    """
    return LindbladGenerator(system, beams).at(t)


def _rk4_matrix(generator: ComplexMatrix, h: float) -> ComplexMatrix:
    a = h * generator
    eye = np.eye(a.shape[0], dtype=complex)
    a2 = a @ a
    return eye + a + a2 / 2 + a2 @ a / 6 + a2 @ a2 / 24


def _rk4_step(gen: LindbladGenerator, t: float, v: np.ndarray, h: float) -> np.ndarray:
    mid = gen.at(t + h / 2)
    k1 = gen.at(t) @ v
    k2 = mid @ (v + h / 2 * k1)
    k3 = mid @ (v + h / 2 * k2)
    k4 = gen.at(t + h) @ (v + h * k3)
    return v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _integrate(
    gen: LindbladGenerator,
    v0: np.ndarray,
    t0: float,
    h: float,
    n_steps: int,
    sample_every: int,
) -> tuple[RealArray, np.ndarray]:
    times = [t0]
    states = [v0]
    v = v0
    if gen.constant:
        step = _rk4_matrix(gen.static, h)
        full, rest = divmod(n_steps, sample_every)
        stride = np.linalg.matrix_power(step, sample_every)
        for k in range(1, full + 1):
            v = stride @ v
            times.append(t0 + k * sample_every * h)
            states.append(v)
        if rest:
            v = np.linalg.matrix_power(step, rest) @ v
            times.append(t0 + n_steps * h)
            states.append(v)
        return np.array(times), np.array(states)
    for k in range(1, n_steps + 1):
        v = _rk4_step(gen, t0 + (k - 1) * h, v, h)
        if k % sample_every == 0 or k == n_steps:
            times.append(t0 + k * h)
            states.append(v)
    return np.array(times), np.array(states)


@dataclass(frozen=True)
class LindbladRun:
    """Sampled trajectory of a level-system density matrix."""

    times_us: RealArray
    states: np.ndarray
    system: LevelSystem

    @property
    def populations(self) -> RealArray:
        """Sublevel populations, one row per sample."""
        return np.einsum("tii->ti", self.states).real

    def manifold_population(self, manifold: str) -> RealArray:
        """Total population of a manifold over time."""
        return self.populations[:, self.system.indices(manifold)].sum(axis=1)

    def sublevel_population(self, manifold: str, m: float) -> RealArray:
        """Population of one sublevel over time."""
        return self.populations[:, self.system.index(manifold, m)]

    def emitted(self) -> dict[str, float]:
        """Integrated emission probability per decay channel."""
        out: dict[str, float] = {}
        for decay in self.system.config.decays:
            rate = self.system.decay_rate(decay.upper, decay.lower)
            pop = self.manifold_population(decay.upper)
            out[f"{decay.upper}->{decay.lower}"] = float(
                integrate.trapezoid(rate * pop, self.times_us)
            )
        return out

    def to_csv(self, path: Path) -> None:
        """Write t_us and every sublevel population."""
        labels = [f"{s.manifold}({s.m:+g})" for s in self.system.sublevels]
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["t_us", *labels])
            for t, row in zip(self.times_us, self.populations):
                writer.writerow([f"{t:.17g}", *(f"{p:.17g}" for p in row)])


def evolve(
    rho0: ComplexMatrix,
    system: LevelSystem,
    beams: Sequence[BeamConfig],
    t_span: tuple[float, float],
    dt: float,
    *,
    sample_every: int = 1,
    check: bool = True,
) -> LindbladRun:
    """Integrate the master equation with fixed fourth-order steps.

    :param rho0: Initial density matrix over the system's sublevels.
    :param system: Level system.
    :param beams: Applied beams.
    :param t_span: Start and end time in us.
    :param dt: Step in us; must not exceed 0.01 / max(Ω, Γ, |Δ|).
    :param sample_every: Keep every n-th step in the trajectory.
    :param check: Repeat at half the step and compare final populations.
    :return: The sampled trajectory.
    """
    gen = LindbladGenerator(system, beams)
    if dt <= 0.0 or dt > gen.max_step * (1 + 1e-9):
        raise StepSizeError(dt, gen.max_step)
    t0, t1 = t_span
    n_steps = max(1, int(np.ceil((t1 - t0) / dt - 1e-9)))
    h = (t1 - t0) / n_steps
    v0 = np.asarray(rho0, dtype=complex).reshape(-1)
    times, vecs = _integrate(gen, v0, t0, h, n_steps, sample_every)
    logger.debug(
        "Integrated %d steps of %.3g us over %d levels", n_steps, h, system.dim
    )
    if check:
        _, fine = _integrate(gen, v0, t0, h / 2, 2 * n_steps, 2 * n_steps)
        n = system.dim
        coarse_pop = np.diag(vecs[-1].reshape(n, n)).real
        fine_pop = np.diag(fine[-1].reshape(n, n)).real
        drift = float(np.max(np.abs(coarse_pop - fine_pop)))
        if drift >= HALVING_TOL:
            raise ConvergenceError("Lindblad step halving", n_steps)
    states = vecs.reshape(len(times), system.dim, system.dim)
    return LindbladRun(times, states, system)


def _propagate(
    gen: LindbladGenerator, vecs: np.ndarray, times: Sequence[float]
) -> list[np.ndarray]:
    """Carry column vectors through increasing times of a constant generator."""
    out = []
    cache: dict[float, np.ndarray] = {}
    t_prev = 0.0
    for t in times:
        span = round(t - t_prev, 12)
        if span > 0.0:
            if span not in cache:
                n = max(1, int(np.ceil(span / gen.max_step - 1e-9)))
                step = _rk4_matrix(gen.static, span / n)
                cache[span] = np.linalg.matrix_power(step, n)
            vecs = cache[span] @ vecs
        out.append(vecs)
        t_prev = t
    return out


def emission_pdf(
    run: LindbladRun, upper: str = "P1/2", lower: str = "D3/2", desired_m: float = -0.5
) -> EmissionTimePDF:
    """Heralding-photon emission density from a trajectory.

    :param run: Trajectory covering the pulse and decay tail.
    :param upper: Emitting manifold.
    :param lower: Manifold the heralding decay lands in.
    :param desired_m: Sublevel of `upper` whose emission is desired.
    :return: Normalized density with the absolute emission probability.
    """
    if not run.system.has_transition(upper, lower):
        raise UnknownTransitionError(lower, upper)
    rate = run.system.decay_rate(upper, lower)
    desired = run.sublevel_population(upper, desired_m)
    other = run.manifold_population(upper) - desired
    t_ns = run.times_us * 1e3
    psi_minus = rate * 1e-3 * desired
    psi_plus = rate * 1e-3 * np.clip(other, 0.0, None)
    total = float(integrate.trapezoid(psi_minus + psi_plus, t_ns))
    return EmissionTimePDF.normalized(t_ns, psi_minus, psi_plus, total)


def excitation_probability(run: LindbladRun, upper: str = "P1/2") -> float:
    """Expected number of spontaneous decays out of `upper`."""
    rate = run.system.decay_rate(upper)
    population = run.manifold_population(upper)
    return float(integrate.trapezoid(rate * population, run.times_us))


def _initial_excitation_state(
    config: ExcitationConfig, system: LevelSystem
) -> ComplexMatrix:
    rho = (1.0 - config.pumping_error) * system.pure_state(
        config.initial_manifold, config.initial_m
    )
    if config.pumping_error:
        rho += config.pumping_error * system.pure_state(
            config.initial_manifold, -config.initial_m
        )
    return rho


def _substeps(step: float, limit: float) -> int:
    return max(1, int(np.ceil(step / limit - 1e-9)))


def simulate_excitation(config: ExcitationConfig, *, check: bool = True) -> LindbladRun:
    """Run the excitation pulse and decay tail.

    :param config: Excitation simulation settings.
    :param check: Run the step-halving check.
    :return: Trajectory sampled every `config.step_ns`.
    """
    system = LevelSystem(config.system)
    gen = LindbladGenerator(system, [config.beam])
    step_us = config.step_ns * 1e-3
    sub = _substeps(step_us, gen.max_step)
    return evolve(
        _initial_excitation_state(config, system),
        system,
        [config.beam],
        (0.0, config.t_end_ns * 1e-3),
        step_us / sub,
        sample_every=sub,
        check=check,
    )


@lru_cache(maxsize=16)
def _cached_pdf(config_json: str) -> EmissionTimePDF:
    config = ExcitationConfig.parse_raw(config_json)
    run = simulate_excitation(config)
    emission = config.emission
    return emission_pdf(run, emission.upper, emission.lower, emission.desired_m)


def excitation_pdf(config: ExcitationConfig | None = None) -> EmissionTimePDF:
    """Emission-time density of an excitation configuration, memoized."""
    return _cached_pdf((config or ExcitationConfig()).json())


def _shelving_beams(
    config: ShelvingConfig, detuning_1004: float, pol_error_1004: float
) -> list[BeamConfig]:
    beam_408 = BeamConfig(
        name="408",
        lower="S1/2",
        upper="P3/2",
        rabi_mhz=config.rabi_408_mhz,
        detuning_mhz=config.detuning_408_mhz,
        polarization=(1.0, 0.0, 0.0),
    ).with_polarization_error(1, config.pol_error_408)
    beam_1004 = BeamConfig(
        name="1004",
        lower="D3/2",
        upper="P3/2",
        rabi_mhz=config.rabi_1004_mhz,
        detuning_mhz=detuning_1004,
        polarization=(0.0, 0.0, 1.0),
    ).with_polarization_error(-1, pol_error_1004)
    return [beam_408, beam_1004]


def _bright_weights(system: LevelSystem, config: ShelvingConfig) -> RealArray:
    """Probability that each sublevel fluoresces during detection."""
    survive = 1.0
    lifetime = system.manifolds["D5/2"].lifetime_us
    if lifetime is not None:
        survive = float(np.exp(-config.detection_time_us / lifetime))
    to_d52 = system.decay_rate("P3/2", "D5/2") / system.decay_rate("P3/2")
    weights = {"S1/2": 1.0, "D3/2": 1.0, "P3/2": 1.0 - to_d52, "D5/2": 1.0 - survive}
    return np.array([weights[s.manifold] for s in system.sublevels])


def shelving_curves(
    detuning_1004: float,
    pol_error_1004: float,
    config: ShelvingConfig | None = None,
    times_us: Sequence[float] | None = None,
) -> tuple[RealArray, RealArray, RealArray]:
    """Bright probability of |0> and |1> over shelving time.

    :param detuning_1004: 1004 nm detuning in MHz.
    :param pol_error_1004: Pi fraction of the 1004 nm sigma- beam.
    :param config: Shelving settings.
    :param times_us: Shelving times; defaults to the config grid.
    :return: times, p_bright for |0>, p_bright for |1>.
    """
    config = config or ShelvingConfig()
    if times_us is None:
        start, stop, points = config.time_grid_us
        times_us = np.linspace(start, stop, points)
    times = np.asarray(times_us, dtype=float)
    system = LevelSystem(config.system)
    beams = _shelving_beams(config, detuning_1004, pol_error_1004)
    gen = LindbladGenerator(system, beams)
    if config.step_us is not None and config.step_us > gen.max_step * (1 + 1e-9):
        raise StepSizeError(config.step_us, gen.max_step)
    v0 = np.stack(
        [system.pure_state(*level).reshape(-1) for level in (QUBIT_ZERO, QUBIT_ONE)],
        axis=1,
    )
    weights = _bright_weights(system, config)
    n = system.dim
    bright = []
    for vecs in _propagate(gen, v0, times):
        pops = np.stack([np.diag(vecs[:, k].reshape(n, n)).real for k in range(2)])
        bright.append(pops @ weights)
    values = np.clip(np.array(bright), 0.0, 1.0)
    return times, values[:, 0], values[:, 1]


def shelving_outcome(
    detuning_1004: float,
    pol_error_1004: float,
    shelve_time: float,
    initial: int,
    config: ShelvingConfig | None = None,
) -> float:
    """Probability that the ion reads bright after shelving.

    :param detuning_1004: 1004 nm detuning in MHz.
    :param pol_error_1004: Pi fraction of the 1004 nm beam.
    :param shelve_time: Shelving duration in us.
    :param initial: Qubit state, 0 or 1.
    :param config: Shelving settings.
    :return: Bright probability.
    """
    if initial not in (0, 1):
        raise ParameterRangeError("initial", initial, 0, 1)
    _, zero, one = shelving_curves(detuning_1004, pol_error_1004, config, [shelve_time])
    return float((zero if initial == 0 else one)[0])


def _best_index(contrast: RealArray) -> int:
    return int(np.flatnonzero(contrast >= contrast.max() - 1e-12)[0])


def optimize_shelve_time(
    detuning: float, pol_error: float, config: ShelvingConfig | None = None
) -> float:
    """Shelving time on the config grid maximizing readout contrast.

    :param detuning: 1004 nm detuning in MHz.
    :param pol_error: Pi fraction of the 1004 nm beam.
    :param config: Shelving settings.
    :return: Time in us; ties go to the shorter time.
    """
    times, zero, one = shelving_curves(detuning, pol_error, config)
    best = _best_index(zero - one)
    if best == len(times) - 1 and len(times) > 1:
        logger.warning(
            "Shelving contrast still rising at the grid end %.3g us; extend the grid",
            times[best],
        )
    return float(times[best])


def best_contrast(
    detuning: float, pol_error: float, config: ShelvingConfig | None = None
) -> float:
    """Contrast F_bright + F_dark - 1 at the recalibrated shelving time."""
    _, zero, one = shelving_curves(detuning, pol_error, config)
    contrast = zero - one
    return float(contrast[_best_index(contrast)])


def contrast_surface(
    detunings: Sequence[float],
    pol_errors: Sequence[float],
    config: ShelvingConfig | None = None,
) -> RealArray:
    """Recalibrated contrast over a detuning by polarization-error grid."""
    return np.array(
        [[best_contrast(d, e, config) for e in pol_errors] for d in detunings]
    )


def calibration_trace(
    pol_error: float, model: CalibrationModel, times_us: Sequence[float]
) -> RealArray:
    """Normalized 1092 nm arrival rate of the 422 nm polarization calibration.

    The ion starts in the ground sublevel dark to the beam under study; only
    its polarization impurity lets it scatter and decay to D3/2.

    :param pol_error: Pi fraction of the 422 nm beam.
    :param model: Calibration model; `handedness` picks the beam.
    :param times_us: Increasing sample times after the AOM rise.
    :return: Total P1/2 population normalized by its integral over the samples.
    """
    config = model.excitation
    hand = model.handedness
    beam = config.beam.copy(
        update={
            "envelope": None,
            "detuning_mhz": abs(config.beam.detuning_mhz) * hand,
        }
    ).with_polarization_error(hand, pol_error)
    system = LevelSystem(config.system)
    gen = LindbladGenerator(system, [beam])
    rho0 = system.pure_state("S1/2", 0.5 * hand)
    times = np.asarray(times_us, dtype=float)
    upper = system.indices("P1/2")
    n = system.dim
    trace = np.array(
        [
            np.diag(v.reshape(n, n)).real[upper].sum()
            for v in _propagate(gen, rho0.reshape(-1), times)
        ]
    )
    area = integrate.trapezoid(trace, times)
    return trace / area if area > 0 else trace


def _normalized(x: RealArray, y: RealArray) -> RealArray:
    area = integrate.trapezoid(y, x)
    return y / area if area > 0 else y


def fit_polarization_error(
    scan: Sequence[tuple[float, float]], model: CalibrationModel | None = None
) -> tuple[float, float]:
    """Fit a beam polarization error to a calibration scan.

    Shelving scans hold (1004 nm detuning MHz, contrast); excitation scans
    hold (time us, 1092 nm arrivals).

    :param scan: At least five scan points.
    :param model: Which simulation to fit.
    :return: Estimate and curvature-based standard error.
    """
    model = model or CalibrationModel()
    if len(scan) < 5:
        raise ParameterRangeError("scan points", len(scan), 5)
    x = np.array([p[0] for p in scan], dtype=float)
    y = np.array([p[1] for p in scan], dtype=float)
    if model.kind == "excitation":
        keep = x >= model.rise_time_us
        x, y = x[keep], _normalized(x[keep], y[keep])

        def predict(eps: float) -> RealArray:
            return calibration_trace(eps, model, x)

        start = 0.01
    else:

        def predict(eps: float) -> RealArray:
            return np.array([best_contrast(d, eps, model.shelving) for d in x])

        start = 1e-3

    def sse(params: np.ndarray) -> float:
        residual = predict(abs(float(params[0]))) - y
        return float(residual @ residual)

    result = optimize.minimize(
        sse,
        x0=[start],
        method="Nelder-Mead",
        options={"xatol": 1e-7, "fatol": 1e-14, "maxiter": model.max_iterations},
    )
    if not result.success:
        raise ConvergenceError("polarization-error fit", int(result.nit))
    estimate = abs(float(result.x[0]))
    logger.info(
        "Fitted polarization error %.3g after %d iterations", estimate, result.nit
    )
    return estimate, _curvature_stderr(sse, estimate, float(result.fun), len(x))


def _curvature_stderr(
    sse: Callable[[np.ndarray], float], estimate: float, best: float, n: int
) -> float:
    """Standard error from the SSE curvature; NaN when the residuals vanish."""
    if best <= RESIDUAL_FLOOR * max(n, 1):
        return float("nan")
    h = max(1e-5, 0.05 * estimate)
    lo = max(estimate - h, 0.0)
    values = [sse(np.array([lo + k * h])) for k in range(3)]
    curvature = (values[2] - 2 * values[1] + values[0]) / h**2
    if curvature <= 0:
        return float("inf")
    variance = best / max(n - 1, 1)
    return float(np.sqrt(2 * variance / curvature))


def scan_dataset(
    pol_error: float, model: CalibrationModel, xs: Sequence[float]
) -> list[tuple[float, float]]:
    """Noise-free calibration scan generated by the model itself."""
    if model.kind == "excitation":
        ys = calibration_trace(pol_error, model, xs)
    else:
        ys = np.array([best_contrast(d, pol_error, model.shelving) for d in xs])
    return list(zip((float(v) for v in xs), (float(v) for v in ys)))
