"""Two-qubit state tomography of the ion-photon link.

Each of the nine settings pairs a photon analysis basis with an ion
measurement basis. Half of a setting's heralds are read with pass 1 and
half with pass 2; only bright passes are retained, so the four recorded
counts are (H port, pass 1), (H port, pass 2), (V port, pass 1) and
(V port, pass 2).
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel, Field, validator
from scipy import optimize

from ionlink._models import NoiseToggles, ReadoutErrors
from ionlink._types import (
    ION_BASES,
    PHOTON_BASES,
    ComplexMatrix,
    IonBasis,
    PhotonBasis,
    ReadoutCorrection,
)
from ionlink._util import rng_for, thread_map, write_json
from ionlink.density import (
    PAULI_I,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    DensityMatrix,
    fidelity,
    max_fidelity_bound,
    psd_project,
    purity,
)
from ionlink.errors import ConfigurationError, MissingSettingError, ParameterRangeError
from ionlink.noise import effective_readout, enabled_mechanisms, link_state
from ionlink.photon import analysis_unitary
from ionlink.readout import bright_operator, ion_projectors, solve_populations
from ionlink.scenario import Scenario
from ionlink.source import LEAK_PHOTON_MARGINAL, JointLinkState, target_state

logger = logging.getLogger(__name__)

MLE_GTOL = 1e-8
MLE_MAX_ITERATIONS = 100_000
INIT_MIX = 1e-6
MIN_BOOTSTRAP = 100
EXACT_HERALDS = 1_000_000.0
TINY = 1e-300

_PAULIS = {"I": PAULI_I, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}
# Pauli measured by each analysis basis and the sign relating them.
_PHOTON_PAULI = {"H": ("Z", 1.0), "D": ("X", 1.0), "R": ("Y", -1.0)}
_ION_PAULI = {"Z": ("Z", 1.0), "X": ("X", 1.0), "Y": ("Y", 1.0)}


class MeasurementSetting(BaseModel):
    """Photon analysis basis and ion measurement basis."""

    photon: PhotonBasis
    ion: IonBasis

    class Config:
        """Settings are hashable values."""

        frozen = True


SETTINGS: tuple[MeasurementSetting, ...] = tuple(
    MeasurementSetting(photon=p, ion=i)
    for p, i in itertools.product(PHOTON_BASES, ION_BASES)
)


class SettingCounts(BaseModel):
    """Retained counts of one setting.

    `counts[2 * port + pass_index]` holds bright passes;
    `pass_heralds[pass_index][port]` holds every herald read in that pass,
    bright or dark.
    """

    photon: PhotonBasis
    ion: IonBasis
    counts: list[float]
    heralds: float = Field(..., ge=0.0)
    pass_heralds: list[list[float]]

    @validator("counts")
    def _four_outcomes(cls, value: list[float]) -> list[float]:
        if len(value) != 4 or min(value) < 0:
            raise ValueError("a setting holds four nonnegative counts")
        return value

    @validator("pass_heralds")
    def _two_by_two(cls, value: list[list[float]]) -> list[list[float]]:
        if len(value) != 2 or any(len(row) != 2 for row in value):
            raise ValueError("pass heralds are indexed [pass][port]")
        return value

    @property
    def setting(self) -> MeasurementSetting:
        """Measurement setting of these counts."""
        return MeasurementSetting(photon=self.photon, ion=self.ion)

    @property
    def retained(self) -> float:
        """Heralds kept after bright-only post-selection."""
        return float(sum(self.counts))

    def bright(self, port: int, pass_index: int) -> float:
        """Bright count of one port and pass."""
        return self.counts[2 * port + pass_index]


class TomographyDataset(BaseModel):
    """Counts of all measurement settings plus the readout errors in force."""

    settings: list[SettingCounts]
    errors: ReadoutErrors = Field(default_factory=ReadoutErrors)
    shots: float = 0.0
    exact: bool = False
    scenario: str = ""

    def setting(self, photon: str, ion: str) -> SettingCounts:
        """Counts of one setting."""
        for s in self.settings:
            if s.photon == photon and s.ion == ion:
                return s
        raise MissingSettingError(photon, ion)

    def require_complete(self) -> None:
        """Check all nine settings are present."""
        for s in SETTINGS:
            self.setting(s.photon, s.ion)

    def save(self, path: Path) -> None:
        """Write the dataset JSON."""
        write_json(path, self)


@dataclass(frozen=True)
class TomographyResult:
    """Reconstructed state and its figures of merit."""

    rho: DensityMatrix
    fidelity: float
    purity: float
    f_max: float
    log_likelihood: float
    converged: bool
    iterations: int
    correction: ReadoutCorrection = "none"
    fidelity_stderr: float | None = None
    purity_stderr: float | None = None

    @classmethod
    def of(
        cls,
        rho: DensityMatrix,
        log_likelihood: float,
        converged: bool,
        iterations: int,
        correction: ReadoutCorrection,
    ) -> TomographyResult:
        """Evaluate the figures of merit of a reconstructed state."""
        p = purity(rho)
        return cls(
            rho=rho,
            fidelity=fidelity(rho, target_state()),
            purity=p,
            f_max=float(max_fidelity_bound(max(p, 0.25))),
            log_likelihood=log_likelihood,
            converged=converged,
            iterations=iterations,
            correction=correction,
        )

    def to_json(self) -> dict:
        """Result as a JSON-ready dict."""
        return {
            "correction": self.correction,
            "fidelity": self.fidelity,
            "purity": self.purity,
            "f_max": self.f_max,
            "fidelity_stderr": self.fidelity_stderr,
            "purity_stderr": self.purity_stderr,
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "iterations": self.iterations,
            "rho": self.rho.to_json(),
        }


def photon_projectors(basis: PhotonBasis) -> tuple[ComplexMatrix, ComplexMatrix]:
    """Projectors onto the states the analysis optics send to the H and V ports."""
    u = analysis_unitary(basis)
    h, v = u.conj().T[:, 0], u.conj().T[:, 1]
    return np.outer(h, h.conj()), np.outer(v, v.conj())


def _ideal_ion_operator(basis: IonBasis, pass_index: int) -> ComplexMatrix:
    return ion_projectors(basis)[pass_index]


def setting_probabilities(
    state: JointLinkState, setting: MeasurementSetting, errors: ReadoutErrors
) -> np.ndarray:
    """Per-herald probabilities of one setting for each readout pass.

    :param state: Link state with leakage.
    :param setting: Measurement setting.
    :param errors: Readout error rates.
    :return: Array [pass, outcome] over (bright H, dark H, bright V, dark V).
    """
    ports = photon_projectors(setting.photon)
    leak = state.p_leak
    rho = state.rho.matrix
    out = np.zeros((2, 4))
    for pass_index in range(2):
        readout_pass = pass_index + 1
        bright_ion = bright_operator(setting.ion, readout_pass, errors)
        leak_bright = errors.eps_d2
        for port, projector in enumerate(ports):
            marginal = float(np.real(projector[0, 0]) * LEAK_PHOTON_MARGINAL[0])
            marginal += float(np.real(projector[1, 1]) * LEAK_PHOTON_MARGINAL[1])
            p_port = (1 - leak) * np.trace(np.kron(projector, PAULI_I) @ rho).real
            p_port += leak * marginal
            bright = (1 - leak) * np.trace(np.kron(projector, bright_ion) @ rho).real
            bright += leak * marginal * leak_bright
            out[pass_index, 2 * port] = bright
            out[pass_index, 2 * port + 1] = p_port - bright
    return np.clip(out, 0.0, None)


def _split(heralds: float, exact: bool) -> tuple[float, float]:
    if exact:
        return heralds / 2, heralds / 2
    first = math.ceil(heralds / 2)
    return float(first), float(int(heralds) - first)


def _counts_from(
    setting: MeasurementSetting, draws: np.ndarray, heralds: float
) -> SettingCounts:
    counts = [draws[0, 0], draws[1, 0], draws[0, 2], draws[1, 2]]
    pass_heralds = [
        [draws[p, 0] + draws[p, 1], draws[p, 2] + draws[p, 3]] for p in range(2)
    ]
    return SettingCounts(
        photon=setting.photon,
        ion=setting.ion,
        counts=[float(c) for c in counts],
        heralds=float(heralds),
        pass_heralds=[[float(c) for c in row] for row in pass_heralds],
    )


def exact_dataset(
    state: JointLinkState, errors: ReadoutErrors, heralds: float = EXACT_HERALDS
) -> TomographyDataset:
    """Dataset whose counts equal their expectation values.

    :param state: Link state.
    :param errors: Readout error rates.
    :param heralds: Heralds per setting.
    :return: Dataset with fractional counts.
    """
    settings = []
    for setting in SETTINGS:
        probs = setting_probabilities(state, setting, errors)
        draws = np.vstack([n * probs[i] for i, n in enumerate(_split(heralds, True))])
        settings.append(_counts_from(setting, draws, heralds))
    return TomographyDataset(
        settings=settings, errors=errors, shots=heralds, exact=True
    )


def sample_dataset(
    state: JointLinkState,
    errors: ReadoutErrors,
    heralds: int,
    seed: int,
    threads: int = 1,
) -> TomographyDataset:
    """Draw multinomial counts for every setting.

    :param state: Link state.
    :param errors: Readout error rates.
    :param heralds: Heralds per setting.
    :param seed: Master seed; setting i draws from substream (dataset, i).
    :param threads: Worker threads.
    :return: The dataset.
    """
    if heralds < 1:
        raise ParameterRangeError("shots", heralds, 1)

    def draw(index: int) -> SettingCounts:
        setting = SETTINGS[index]
        rng = rng_for(seed, "dataset", index)
        probs = setting_probabilities(state, setting, errors)
        draws = []
        for pass_index, n in enumerate(_split(heralds, False)):
            p = probs[pass_index] / probs[pass_index].sum()
            draws.append(rng.multinomial(int(n), p))
        return _counts_from(setting, np.array(draws, dtype=float), heralds)

    settings = thread_map(draw, range(len(SETTINGS)), threads)
    return TomographyDataset(settings=settings, errors=errors, shots=heralds)


def simulate_dataset(
    scenario: Scenario,
    shots: int,
    seed: int,
    threads: int = 1,
    toggles: NoiseToggles | None = None,
) -> TomographyDataset:
    """Run the full link pipeline and read out every setting.

    :param scenario: Scenario.
    :param shots: Heralds per setting.
    :param seed: Master seed.
    :param threads: Worker threads.
    :param toggles: Noise mechanisms; defaults to the scenario's.
    :return: The dataset.
    """
    toggles = scenario.noise if toggles is None else toggles
    state = link_state(scenario, toggles)
    errors = effective_readout(scenario, toggles)
    dataset = sample_dataset(state, errors, shots, seed, threads)
    logger.info(
        "Simulated %d heralds per setting for %s", shots, scenario.name or "scenario"
    )
    return dataset.copy(update={"scenario": scenario.name})


def _pass_totals(s: SettingCounts) -> tuple[float, float]:
    return sum(s.pass_heralds[0]), sum(s.pass_heralds[1])


def joint_frequencies(
    s: SettingCounts, errors: ReadoutErrors, correct: bool
) -> np.ndarray:
    """Post-selected joint distribution over (port, ion outcome).

    :param s: Counts of one setting.
    :param errors: Readout error rates.
    :param correct: Invert the readout errors port by port.
    :return: 2x2 array [port, outcome] summing to 1, or zeros.
    """
    freq = np.zeros((2, 2))
    if correct:
        for port in range(2):
            k1, k2 = s.pass_heralds[0][port], s.pass_heralds[1][port]
            if k1 <= 0 or k2 <= 0:
                continue
            b1, b2 = s.bright(port, 0) / k1, s.bright(port, 1) / k2
            n = solve_populations(b1, b2, 1.0, errors)
            freq[port] = (k1 + k2) * np.clip(n[:2], 0.0, None)
    else:
        totals = _pass_totals(s)
        for port in range(2):
            for q in range(2):
                if totals[q] > 0:
                    freq[port, q] = s.bright(port, q) / totals[q]
    total = freq.sum()
    return freq / total if total > 0 else freq


def _correlators(d: TomographyDataset, correct: bool) -> dict[tuple[str, str], float]:
    """Pauli expectation values, single-qubit ones averaged over settings."""
    d.require_complete()
    sign = np.array([1.0, -1.0])
    sums: dict[tuple[str, str], list[float]] = {}
    for s in d.settings:
        freq = joint_frequencies(s, d.errors, correct)
        photon, photon_sign = _PHOTON_PAULI[s.photon]
        ion, ion_sign = _ION_PAULI[s.ion]
        values = {
            (photon, ion): photon_sign * ion_sign * float(sign @ freq @ sign),
            (photon, "I"): photon_sign * float(sign @ freq.sum(axis=1)),
            ("I", ion): ion_sign * float(freq.sum(axis=0) @ sign),
        }
        for key, value in values.items():
            sums.setdefault(key, []).append(value)
    out = {key: float(np.mean(v)) for key, v in sums.items()}
    out[("I", "I")] = 1.0
    return out


def linear_inversion(
    d: TomographyDataset, correction: ReadoutCorrection = "none"
) -> ComplexMatrix:
    """Hermitian estimate from Pauli expectation values.

    :param d: Complete dataset.
    :param correction: "none" uses raw counts; otherwise counts are readout-corrected.
    :return: rho = 1/4 sum <s_a s_b> s_a (x) s_b; trace 1, possibly not positive.
    """
    expectations = _correlators(d, correction != "none")
    rho = np.zeros((4, 4), dtype=complex)
    for (a, b), value in expectations.items():
        rho += value * np.kron(_PAULIS[a], _PAULIS[b])
    rho /= 4
    return (rho + rho.conj().T) / 2


@dataclass
class _Likelihood:
    """Conditional multinomial likelihood of all settings."""

    operators: np.ndarray
    counts: np.ndarray
    group: np.ndarray
    n_groups: int
    group_counts: np.ndarray = field(init=False)
    total: float = field(init=False)

    def __post_init__(self) -> None:
        self.group_counts = np.bincount(
            self.group, weights=self.counts, minlength=self.n_groups
        )
        self.total = float(self.counts.sum())

    def probabilities(self, a: ComplexMatrix) -> tuple[np.ndarray, np.ndarray]:
        traces = np.einsum("oij,ji->o", self.operators, a).real
        totals = np.bincount(self.group, weights=traces, minlength=self.n_groups)
        return np.maximum(traces, TINY), np.maximum(totals, TINY)

    def log_likelihood(self, a: ComplexMatrix) -> float:
        traces, totals = self.probabilities(a)
        used = self.counts > 0
        value = np.sum(self.counts[used] * np.log(traces[used]))
        occupied = self.group_counts > 0
        value -= np.sum(self.group_counts[occupied] * np.log(totals[occupied]))
        return float(value)

    def objective(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        t = _unpack(x)
        a = t @ t.conj().T
        traces, totals = self.probabilities(a)
        value = -self.log_likelihood(a) / self.total
        per_group = (self.group_counts / totals)[self.group]
        weights = (per_group - self.counts / traces) / self.total
        g = np.einsum("o,oij->ij", weights, self.operators)
        k = t.conj().T @ g
        grad_t = 2 * k.T
        return value, _pack_gradient(grad_t)


_LOWER = np.tril_indices(4, -1)


def _unpack(x: np.ndarray) -> ComplexMatrix:
    t = np.diag(x[:4]).astype(complex)
    t[_LOWER] = x[4:10] + 1j * x[10:16]
    return t


def _pack(t: ComplexMatrix) -> np.ndarray:
    return np.concatenate([np.diag(t).real, t[_LOWER].real, t[_LOWER].imag])


def _pack_gradient(grad_t: ComplexMatrix) -> np.ndarray:
    """Real gradient from 2 K^T, whose entry (i, j) is the derivative along T_ij."""
    return np.concatenate(
        [np.diag(grad_t).real, grad_t[_LOWER].real, -grad_t[_LOWER].imag]
    )


def _likelihood(d: TomographyDataset, correction: ReadoutCorrection) -> _Likelihood:
    d.require_complete()
    operators, counts, group = [], [], []
    for index, s in enumerate(d.settings):
        ports = photon_projectors(s.photon)
        if correction == "before":
            freq = joint_frequencies(s, d.errors, True) * s.retained
            for port, q in itertools.product(range(2), range(2)):
                operators.append(np.kron(ports[port], _ideal_ion_operator(s.ion, q)))
                counts.append(freq[port, q])
                group.append(index)
            continue
        totals = _pass_totals(s)
        for port, q in itertools.product(range(2), range(2)):
            if correction == "inside":
                ion_op = bright_operator(s.ion, q + 1, d.errors)
            else:
                ion_op = _ideal_ion_operator(s.ion, q)
            operators.append(totals[q] * np.kron(ports[port], ion_op))
            counts.append(s.bright(port, q))
            group.append(index)
    return _Likelihood(
        np.array(operators),
        np.array(counts, dtype=float),
        np.array(group),
        len(d.settings),
    )


def log_likelihood(
    d: TomographyDataset, rho: DensityMatrix, correction: ReadoutCorrection = "none"
) -> float:
    """Post-selected multinomial log-likelihood of a state."""
    return _likelihood(d, correction).log_likelihood(rho.matrix)


def initial_state(
    d: TomographyDataset, correction: ReadoutCorrection = "none"
) -> DensityMatrix:
    """Projected linear inversion, mixed slightly toward I/4 to be full rank."""
    projected = psd_project(linear_inversion(d, correction)).matrix
    return DensityMatrix((1 - INIT_MIX) * projected + INIT_MIX * np.eye(4) / 4)


def mle_reconstruct(
    d: TomographyDataset,
    init: DensityMatrix | None = None,
    correction: ReadoutCorrection = "none",
    max_iterations: int = MLE_MAX_ITERATIONS,
) -> TomographyResult:
    """Maximum-likelihood state over trace-one positive matrices.

    rho = T T^dagger / Tr(T T^dagger) with T lower triangular (16 real
    parameters), optimized by BFGS with an analytic gradient.

    :param d: Complete dataset.
    :param init: Starting state; defaults to `initial_state(d, correction)`.
    :param correction: "none", "before" (counts corrected first) or
        "inside" (readout folded into the measurement operators).
    :param max_iterations: Iteration cap; the best iterate is returned unconverged.
    :return: Reconstruction with figures of merit.
    """
    if correction not in ("none", "before", "inside"):
        raise ConfigurationError(f'Unknown readout correction "{correction}".')
    model = _likelihood(d, correction)
    if model.total <= 0:
        raise ParameterRangeError("retained counts", model.total, 0.0)
    if init is None:
        init = initial_state(d, correction)
    start = (1 - INIT_MIX) * init.matrix + INIT_MIX * np.eye(4) / 4
    x0 = _pack(np.linalg.cholesky(start))
    result = optimize.minimize(
        model.objective,
        x0,
        jac=True,
        method="BFGS",
        options={"gtol": MLE_GTOL, "maxiter": max_iterations},
    )
    converged = result.status in (0, 2)
    t = _unpack(result.x)
    a = t @ t.conj().T
    rho = DensityMatrix((a + a.conj().T) / (2 * np.trace(a).real))
    ll, ll_init = model.log_likelihood(rho.matrix), model.log_likelihood(init.matrix)
    if ll < ll_init:
        rho, ll = init, ll_init
    logger.debug("MLE stopped after %d iterations: %s", result.nit, result.message)
    return TomographyResult.of(rho, ll, converged, int(result.nit), correction)


def resample(d: TomographyDataset, rng: np.random.Generator) -> TomographyDataset:
    """Multinomial resampling of every setting and pass."""
    settings = []
    for s in d.settings:
        draws = []
        for pass_index in range(2):
            observed = np.array(
                [
                    s.bright(0, pass_index),
                    s.pass_heralds[pass_index][0] - s.bright(0, pass_index),
                    s.bright(1, pass_index),
                    s.pass_heralds[pass_index][1] - s.bright(1, pass_index),
                ]
            )
            n = int(round(observed.sum()))
            if n:
                draws.append(rng.multinomial(n, observed / observed.sum()))
            else:
                draws.append(observed)
        drawn = np.array(draws, dtype=float)
        settings.append(_counts_from(s.setting, drawn, s.heralds))
    return d.copy(update={"settings": settings})


def bootstrap(
    d: TomographyDataset,
    resamples: int,
    seed: int,
    correction: ReadoutCorrection = "none",
    threads: int = 1,
) -> tuple[float, float]:
    """Standard errors of fidelity and purity by parametric resampling.

    :param d: Dataset.
    :param resamples: Number of resampled datasets, at least 100.
    :param seed: Master seed; resample i draws from substream (bootstrap, i).
    :param correction: Readout correction used by every reconstruction.
    :param threads: Worker threads.
    :return: (fidelity stderr, purity stderr).
    """
    if resamples < MIN_BOOTSTRAP:
        raise ParameterRangeError("resamples", resamples, MIN_BOOTSTRAP)
    if d.exact:
        return 0.0, 0.0

    def one(index: int) -> tuple[float, float]:
        sample = resample(d, rng_for(seed, "bootstrap", index))
        result = mle_reconstruct(sample, correction=correction)
        return result.fidelity, result.purity

    values = np.array(thread_map(one, range(resamples), threads))
    logger.info("Bootstrapped %d reconstructions", resamples)
    return float(values[:, 0].std(ddof=1)), float(values[:, 1].std(ddof=1))


@dataclass(frozen=True)
class BudgetLine:
    """Fidelity cost of one mechanism."""

    name: str
    label: str
    delta: float
    isolated: float


@dataclass(frozen=True)
class ErrorBudget:
    """Per-mechanism fidelity deltas of a scenario."""

    fidelity: float
    ideal_fidelity: float
    lines: list[BudgetLine]

    @property
    def infidelity(self) -> float:
        """1 - F with every mechanism enabled."""
        return 1.0 - self.fidelity

    @property
    def delta_sum(self) -> float:
        """Sum of the leave-one-out deltas."""
        return float(sum(line.delta for line in self.lines))

    def to_json(self) -> dict:
        """Budget as a JSON-ready dict."""
        return {
            "fidelity": self.fidelity,
            "ideal_fidelity": self.ideal_fidelity,
            "infidelity": self.infidelity,
            "delta_sum": self.delta_sum,
            "mechanisms": [
                {
                    "name": line.name,
                    "label": line.label,
                    "delta": line.delta,
                    "isolated": line.isolated,
                }
                for line in self.lines
            ],
        }


def exact_fidelity(
    scenario: Scenario, toggles: NoiseToggles, correction: ReadoutCorrection = "none"
) -> float:
    """MLE fidelity of the noise-free-statistics dataset of a scenario."""
    state = link_state(scenario, toggles)
    d = exact_dataset(state, effective_readout(scenario, toggles))
    return mle_reconstruct(d, correction=correction).fidelity


def error_budget_report(
    scenario: Scenario,
    correction: ReadoutCorrection = "none",
    mechanisms: Sequence[str] | None = None,
) -> ErrorBudget:
    """Fidelity lost to each enabled noise mechanism.

    `delta` is F(all but the mechanism) - F(all); `isolated` is
    F(none) - F(only the mechanism).

    :param scenario: Scenario whose toggles select the mechanisms.
    :param correction: Readout correction of every reconstruction.
    :param mechanisms: Restrict the report to these mechanism names.
    :return: The budget.
    """
    toggles = scenario.noise
    chosen = [
        m
        for m in enabled_mechanisms(toggles)
        if mechanisms is None or m.name in mechanisms
    ]
    full = exact_fidelity(scenario, toggles, correction)
    ideal = exact_fidelity(scenario, NoiseToggles.none(), correction)
    lines = []
    for mechanism in chosen:
        without = exact_fidelity(scenario, toggles.without(mechanism.name), correction)
        alone = exact_fidelity(scenario, toggles.only(mechanism.name), correction)
        lines.append(
            BudgetLine(mechanism.name, mechanism.label, without - full, ideal - alone)
        )
        logger.debug("%s: %.3g", mechanism.label, without - full)
    return ErrorBudget(full, ideal, lines)
