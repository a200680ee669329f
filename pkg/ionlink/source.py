"""Ion-photon state at emission and the emission-time density."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate

from ionlink._types import Branch, RealArray
from ionlink.density import DensityMatrix, KrausChannel, PureState
from ionlink.errors import EmptyWindowError, InvalidStateError, ParameterRangeError

logger = logging.getLogger(__name__)

PDF_NORM_TOL = 1e-6
# Photon marginal (H, V) of the leaked branch
# |sigma+>|-1/2> / 2 + sqrt(3)|sigma->|+3/2> / 2.
LEAK_PHOTON_MARGINAL = (0.25, 0.75)
# First line of an emission-density CSV.
TOTAL_PROBABILITY_PREFIX = "# total_probability="


@dataclass(frozen=True)
class EmissionAmplitudes:
    """Decay amplitudes into |H, 0> and |V, 1>."""

    amp_h0: float = np.sqrt(3.0) / 2.0
    amp_v1: float = 0.5

    def __post_init__(self) -> None:
        """Check normalization."""
        norm = self.amp_h0**2 + self.amp_v1**2
        if abs(norm - 1.0) > 1e-12:
            raise InvalidStateError(f"emission amplitudes have squared norm {norm}")

    def state(self) -> PureState:
        """amp_h0 |H0> + amp_v1 |V1> in photon (x) ion ordering."""
        return PureState(np.array([self.amp_h0, 0.0, 0.0, self.amp_v1], dtype=complex))


@dataclass(frozen=True)
class EmissionTimePDF:
    """Heralding-photon emission density split by excited sublevel.

    `psi_minus` and `psi_plus` are per-ns densities normalized so that
    their joint integral is 1; `total_probability` is the absolute
    probability that the photon is emitted at all.
    """

    t_ns: RealArray
    psi_minus: RealArray
    psi_plus: RealArray
    total_probability: float = 1.0

    def __post_init__(self) -> None:
        """Validate grid, signs and normalization."""
        t = np.asarray(self.t_ns, dtype=float)
        minus = np.asarray(self.psi_minus, dtype=float)
        plus = np.asarray(self.psi_plus, dtype=float)
        if t.ndim != 1 or t.size < 2 or minus.shape != t.shape or plus.shape != t.shape:
            raise InvalidStateError("emission density arrays must share a 1-d grid")
        if np.any(np.diff(t) <= 0):
            raise InvalidStateError("emission time grid must increase")
        if minus.min() < 0 or plus.min() < 0:
            raise InvalidStateError("emission densities must be nonnegative")
        total = integrate.trapezoid(minus + plus, t)
        if abs(total - 1.0) > PDF_NORM_TOL:
            raise InvalidStateError(f"emission density integrates to {total}")
        for name, values in (("t_ns", t), ("psi_minus", minus), ("psi_plus", plus)):
            values.setflags(write=False)
            object.__setattr__(self, name, values)

    @classmethod
    def normalized(
        cls,
        t_ns: RealArray,
        psi_minus: RealArray,
        psi_plus: RealArray,
        total_probability: float | None = None,
    ) -> EmissionTimePDF:
        """Build from unnormalized densities.

        :param t_ns: Time grid.
        :param psi_minus: Desired-branch density, any scale.
        :param psi_plus: Error-branch density, same scale.
        :param total_probability: Absolute emission probability; defaults
            to the raw integral.
        :return: The normalized density.
        """
        t = np.asarray(t_ns, dtype=float)
        minus = np.clip(np.asarray(psi_minus, dtype=float), 0.0, None)
        plus = np.clip(np.asarray(psi_plus, dtype=float), 0.0, None)
        total = integrate.trapezoid(minus + plus, t)
        if total <= 0.0:
            raise InvalidStateError("emission density is identically zero")
        return cls(
            t,
            minus / total,
            plus / total,
            total if total_probability is None else total_probability,
        )

    @property
    def density(self) -> RealArray:
        """Combined density psi_minus + psi_plus."""
        return self.psi_minus + self.psi_plus

    def to_csv(self, path: Path) -> None:
        """Write columns t_ns, psi_minus, psi_plus after a total_probability line."""
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(f"{TOTAL_PROBABILITY_PREFIX}{self.total_probability:.17g}\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["t_ns", "psi_minus", "psi_plus"])
            for row in zip(self.t_ns, self.psi_minus, self.psi_plus):
                writer.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path: Path) -> EmissionTimePDF:
        """Read columns t_ns, psi_minus, psi_plus and renormalize.

        A leading `# total_probability=` line restores the absolute emission
        probability; files without it integrate to their own total.
        """
        with open(path, newline="", encoding="utf-8") as f:
            lines = f.read().splitlines()
        total = None
        if lines and lines[0].startswith(TOTAL_PROBABILITY_PREFIX):
            total = float(lines.pop(0)[len(TOTAL_PROBABILITY_PREFIX) :])
        rows = [
            (float(r["t_ns"]), float(r["psi_minus"]), float(r["psi_plus"]))
            for r in csv.DictReader(lines)
        ]
        t, minus, plus = (np.array(c) for c in zip(*rows))
        return cls.normalized(t, minus, plus, total)


@dataclass(frozen=True)
class JointLinkState:
    """Photon (x) ion qubit state plus leakage out of the qubit manifold."""

    rho: DensityMatrix
    p_leak: float = 0.0

    def __post_init__(self) -> None:
        """Validate leakage and dimension."""
        if self.rho.dim != 4:
            raise InvalidStateError("link state must be two-qubit")
        if not 0.0 <= self.p_leak <= 1.0:
            raise ParameterRangeError("p_leak", self.p_leak, 0.0, 1.0)


def target_state() -> PureState:
    """sqrt(3)/2 |H0> + 1/2 |V1>."""
    return EmissionAmplitudes().state()


def ideal_state() -> JointLinkState:
    """Pure emission state with no leakage."""
    return JointLinkState(DensityMatrix.from_pure(target_state()), 0.0)


def window_integral(t: RealArray, y: RealArray, t_i: float, t_f: float) -> float:
    """Trapezoid integral of sampled `y` over [t_i, t_f] clipped to the grid.

    :param t: Increasing sample times.
    :param y: Samples.
    :param t_i: Window start.
    :param t_f: Window end.
    :return: The integral.
    """
    lo = max(t_i, float(t[0]))
    hi = min(t_f, float(t[-1]))
    if not lo < hi:
        raise EmptyWindowError(t_i, t_f)
    inside = (t > lo) & (t < hi)
    grid = np.concatenate(([lo], t[inside], [hi]))
    values = np.interp(grid, t, y)
    return float(integrate.trapezoid(values, grid))


def window_success_s(pdf: EmissionTimePDF, t_i: float, t_f: float) -> float:
    """Probability that a photon detected in [t_i, t_f] came from the desired branch.

    :param pdf: Emission density.
    :param t_i: Window start in ns.
    :param t_f: Window end in ns.
    :return: S in [0, 1].
    """
    minus = window_integral(pdf.t_ns, pdf.psi_minus, t_i, t_f)
    total = minus + window_integral(pdf.t_ns, pdf.psi_plus, t_i, t_f)
    if total <= 0.0:
        raise EmptyWindowError(t_i, t_f)
    return min(max(minus / total, 0.0), 1.0)


def prepared_state(s: float, extra_mix: KrausChannel | None = None) -> JointLinkState:
    """Emission state with the wrong-sublevel branch booked as leakage.

    :param s: Desired-branch probability S.
    :param extra_mix: Optional channel applied to the qubit-space state.
    :return: The prepared link state.
    """
    if not 0.0 <= s <= 1.0:
        raise ParameterRangeError("S", s, 0.0, 1.0)
    rho = DensityMatrix.from_pure(target_state())
    if extra_mix is not None:
        rho = extra_mix.apply(rho)
    return JointLinkState(rho, 1.0 - s)


def sample_emission(
    pdf: EmissionTimePDF, rng: np.random.Generator, size: int | None = None
) -> tuple[float, Branch] | tuple[RealArray, np.ndarray]:
    """Draw emission times and branches by inverse-CDF sampling.

    :param pdf: Emission density.
    :param rng: Random stream owned by the caller.
    :param size: Number of draws; `None` for a single draw.
    :return: `(time_ns, branch)`, or arrays of times and booleans that are
        True for the desired branch.
    """
    density = pdf.density
    cdf = integrate.cumulative_trapezoid(density, pdf.t_ns, initial=0.0)
    cdf /= cdf[-1]
    n = 1 if size is None else size
    u = rng.random(n)
    # Drop interior points of flat CDF stretches.
    rising = np.diff(cdf) > 0
    keep = np.concatenate((rising, [False])) | np.concatenate(([False], rising))
    times = np.interp(u, cdf[keep], pdf.t_ns[keep])
    total = np.interp(times, pdf.t_ns, density)
    minus = np.interp(times, pdf.t_ns, pdf.psi_minus)
    ratio = np.divide(minus, total, out=np.ones_like(total), where=total > 0)
    desired = rng.random(n) < ratio
    if size is None:
        return float(times[0]), "desired" if desired[0] else "error"
    return times, desired
