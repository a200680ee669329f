"""Zeeman-resolved level systems built from manifold descriptions."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from sympy import Rational
from sympy.physics.wigner import clebsch_gordan

from ionlink._models import (
    BOHR_MAGNETON_MHZ_PER_GAUSS,
    BeamConfig,
    LevelSystemConfig,
    ManifoldConfig,
)
from ionlink._types import ComplexMatrix
from ionlink.errors import ConfigurationError, UnknownTransitionError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


def _half(x: float) -> Rational:
    return Rational(int(round(2 * x)), 2)


@lru_cache(maxsize=None)
def coupling_coefficient(
    j_l: float, m_l: float, rank: int, q: int, j_u: float, m_u: float
) -> float:
    """<j_l m_l; rank q | j_u m_u>.

    :return: The Clebsch-Gordan coefficient as a float.
    """
    value = clebsch_gordan(_half(j_l), rank, _half(j_u), _half(m_l), q, _half(m_u))
    return float(value)


@dataclass(frozen=True)
class Sublevel:
    """One Zeeman sublevel."""

    manifold: str
    j: float
    m: float
    zeeman_mhz: float


@dataclass(frozen=True)
class DecayChannel:
    """Collapse operator for one manifold pair and photon polarization."""

    upper: str
    lower: str
    q: int
    rate: float
    operator: ComplexMatrix


class LevelSystem:
    """Sublevel expansion of a `LevelSystemConfig`."""

    def __init__(self, config: LevelSystemConfig) -> None:
        """Expand manifolds into sublevels and decays into collapse operators.

        :param config: Manifolds, decays and magnetic field.
        """
        self.config = config
        self.manifolds: dict[str, ManifoldConfig] = {
            m.label: m for m in config.manifolds
        }
        self.sublevels: list[Sublevel] = []
        for manifold in config.manifolds:
            for k in range(int(round(2 * manifold.j)) + 1):
                m = -manifold.j + k
                self.sublevels.append(
                    Sublevel(
                        manifold.label,
                        manifold.j,
                        m,
                        manifold.g_j
                        * m
                        * BOHR_MAGNETON_MHZ_PER_GAUSS
                        * config.b_field_gauss,
                    )
                )
        self._index = {(s.manifold, s.m): i for i, s in enumerate(self.sublevels)}
        self.decays = self._decay_channels()

    @property
    def dim(self) -> int:
        """Number of sublevels."""
        return len(self.sublevels)

    def index(self, manifold: str, m: float) -> int:
        """Position of sublevel (manifold, m)."""
        try:
            return self._index[(manifold, m)]
        except KeyError:
            raise ConfigurationError(
                f'Level system has no sublevel "{manifold}" m={m}.'
            )

    def indices(self, manifold: str) -> list[int]:
        """Positions of every sublevel of a manifold."""
        if manifold not in self.manifolds:
            raise ConfigurationError(f'Level system has no manifold "{manifold}".')
        return [i for i, s in enumerate(self.sublevels) if s.manifold == manifold]

    def decay_rate(self, upper: str, lower: str | None = None) -> float:
        """Decay rate in 1/us of `upper`, total or into `lower`."""
        manifold = self.manifolds[upper]
        if manifold.lifetime_us is None:
            return 0.0
        branching = sum(
            d.branching
            for d in self.config.decays
            if d.upper == upper and (lower is None or d.lower == lower)
        )
        return branching / manifold.lifetime_us

    def has_transition(self, upper: str, lower: str) -> bool:
        """Whether a decay channel connects the two manifolds."""
        return any(d.upper == upper and d.lower == lower for d in self.config.decays)

    def pure_state(self, manifold: str, m: float) -> ComplexMatrix:
        """Projector onto one sublevel."""
        rho = np.zeros((self.dim, self.dim), dtype=complex)
        i = self.index(manifold, m)
        rho[i, i] = 1.0
        return rho

    def _pairs(
        self, lower: str, upper: str, rank: int
    ) -> list[tuple[int, int, int, float]]:
        pairs = []
        for l in self.indices(lower):
            for u in self.indices(upper):
                sl, su = self.sublevels[l], self.sublevels[u]
                q = int(round(su.m - sl.m))
                if abs(q) > rank:
                    continue
                c = coupling_coefficient(sl.j, sl.m, rank, q, su.j, su.m)
                if c != 0.0:
                    pairs.append((l, u, q, c))
        return pairs

    def _decay_channels(self) -> list[DecayChannel]:
        channels = []
        for decay in self.config.decays:
            rate = self.decay_rate(decay.upper, decay.lower)
            if rate == 0.0:
                continue
            by_q: dict[int, np.ndarray] = {}
            for l, u, q, c in self._pairs(decay.lower, decay.upper, decay.rank):
                op = by_q.setdefault(q, np.zeros((self.dim, self.dim), dtype=complex))
                op[l, u] = np.sqrt(rate) * c
            channels.extend(
                DecayChannel(decay.upper, decay.lower, q, rate, op)
                for q, op in sorted(by_q.items())
            )
        return channels

    def frames(self, beams: list[BeamConfig]) -> dict[str, float]:
        """Rotating-frame offset in rad/us of every manifold.

        Beams must form a tree over the manifolds they connect.
        """
        for beam in beams:
            for label in (beam.lower, beam.upper):
                if label not in self.manifolds:
                    raise UnknownTransitionError(beam.lower, beam.upper)
        frames: dict[str, float] = {}
        for root in self.manifolds:
            if root in frames:
                continue
            frames[root] = 0.0
            queue = deque([root])
            while queue:
                label = queue.popleft()
                for beam in beams:
                    shift = TWO_PI * beam.detuning_mhz
                    if beam.lower == label:
                        other, value = beam.upper, frames[label] - shift
                    elif beam.upper == label:
                        other, value = beam.lower, frames[label] + shift
                    else:
                        continue
                    if other not in frames:
                        frames[other] = value
                        queue.append(other)
                    elif abs(frames[other] - value) > 1e-9:
                        raise ConfigurationError(
                            f'Beams form a loop through "{other}"; no rotating frame.'
                        )
        return frames

    def bare_hamiltonian(self, beams: list[BeamConfig]) -> ComplexMatrix:
        """Diagonal Zeeman plus rotating-frame part in rad/us."""
        frames = self.frames(beams)
        diag = [TWO_PI * s.zeeman_mhz + frames[s.manifold] for s in self.sublevels]
        return np.diag(np.array(diag, dtype=complex))

    def beam_hamiltonian(self, beam: BeamConfig) -> ComplexMatrix:
        """Coupling of one beam at full envelope, rad/us."""
        if beam.lower not in self.manifolds or beam.upper not in self.manifolds:
            raise UnknownTransitionError(beam.lower, beam.upper)
        omega = TWO_PI * beam.rabi_mhz
        fractions = dict(zip((1, 0, -1), beam.polarization))
        h = np.zeros((self.dim, self.dim), dtype=complex)
        for l, u, q, c in self._pairs(beam.lower, beam.upper, beam.rank):
            amplitude = omega * c * np.sqrt(fractions[q]) / 2
            h[u, l] += amplitude
            h[l, u] += amplitude
        return h


def decay_operator_sum(channels: list[DecayChannel]) -> ComplexMatrix:
    """sum_k L_k^dagger L_k."""
    return sum(c.operator.conj().T @ c.operator for c in channels)
