"""Density operators, Kraus channels and two-qubit figures of merit.

The joint link space is ordered photon (x) ion with photon basis {H, V}
and ion basis {|0>, |1>}, so index = 2 * photon + ion.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from ionlink._types import ComplexMatrix, Subsystem
from ionlink.errors import (
    DimensionMismatchError,
    InvalidStateError,
    ParameterRangeError,
    ZeroProjectionError,
)

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-9
PSD_TOL = 1e-9
NORM_TOL = 1e-12
COMPLETENESS_TOL = 1e-9

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

# Ion-qubit index blocks in the photon (x) ion ordering.
ION_ZERO = (0, 2)
ION_ONE = (1, 3)


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=complex)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class DensityMatrix:
    """Trace-one positive-semidefinite operator."""

    matrix: ComplexMatrix

    def __post_init__(self) -> None:
        """Validate Hermiticity, trace and positivity."""
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise InvalidStateError(f"shape {m.shape} is not square")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise InvalidStateError("matrix is not Hermitian")
        trace = np.trace(m).real
        if abs(trace - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"trace is {trace}")
        if linalg.eigvalsh(m).min() < -PSD_TOL:
            raise InvalidStateError("matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        """Hilbert-space dimension."""
        return int(self.matrix.shape[0])

    @classmethod
    def from_pure(cls, psi: PureState) -> DensityMatrix:
        """Projector onto a pure state."""
        return cls(np.outer(psi.amplitudes, psi.amplitudes.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> DensityMatrix:
        """I / dim."""
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def from_json(cls, data: dict) -> DensityMatrix:
        """Parse `{"dim", "re", "im"}` with row-major entries.

        :param data: Decoded JSON object.
        :return: The density matrix.
        """
        dim = int(data["dim"])
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data["im"], dtype=float)
        if re.size != dim * dim or im.size != dim * dim:
            raise DimensionMismatchError(dim * dim, int(re.size))
        return cls((re + 1j * im).reshape(dim, dim))

    def to_json(self) -> dict:
        """Serialize as `{"dim", "re", "im"}` with row-major entries."""
        return {
            "dim": self.dim,
            "re": self.matrix.real.ravel().tolist(),
            "im": self.matrix.imag.ravel().tolist(),
        }

    def eigenvalues(self) -> np.ndarray:
        """Ascending real spectrum."""
        return linalg.eigvalsh(self.matrix)


@dataclass(frozen=True)
class PureState:
    """Normalized state vector."""

    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        """Validate normalization."""
        amps = _frozen(self.amplitudes)
        if amps.ndim != 1 or amps.size == 0:
            raise InvalidStateError(f"shape {amps.shape} is not a vector")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidStateError(f"squared norm is {norm}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        """Hilbert-space dimension."""
        return int(self.amplitudes.size)

    @classmethod
    def basis(cls, dim: int, index: int) -> PureState:
        """Computational basis vector."""
        amps = np.zeros(dim, dtype=complex)
        amps[index] = 1.0
        return cls(amps)


@dataclass(frozen=True)
class KrausChannel:
    """Completely positive trace-preserving map in Kraus form."""

    operators: tuple[ComplexMatrix, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        """Validate completeness: sum K^dagger K = I."""
        ops = tuple(_frozen(k) for k in self.operators)
        if not ops:
            raise InvalidStateError("channel has no Kraus operators")
        dim = ops[0].shape[0]
        total = np.zeros((dim, dim), dtype=complex)
        for k in ops:
            if k.shape != (dim, dim):
                raise DimensionMismatchError(dim, k.shape[0])
            total += k.conj().T @ k
        if np.max(np.abs(total - np.eye(dim))) > COMPLETENESS_TOL:
            raise InvalidStateError("Kraus operators are not complete")
        object.__setattr__(self, "operators", ops)

    @property
    def dim(self) -> int:
        """Dimension the channel acts on."""
        return int(self.operators[0].shape[0])

    @classmethod
    def depolarizing(cls, p: float) -> KrausChannel:
        """Qubit channel rho -> (1 - p) rho + p I / 2."""
        _check_unit("p", p)
        return cls(
            (
                np.sqrt(1 - 3 * p / 4) * PAULI_I,
                np.sqrt(p / 4) * PAULI_X,
                np.sqrt(p / 4) * PAULI_Y,
                np.sqrt(p / 4) * PAULI_Z,
            )
        )

    @classmethod
    def dephasing(cls, gamma: float) -> KrausChannel:
        """Qubit channel scaling the coherence by `gamma`."""
        _check_unit("gamma", gamma)
        return cls(
            (np.sqrt((1 + gamma) / 2) * PAULI_I, np.sqrt((1 - gamma) / 2) * PAULI_Z)
        )

    @classmethod
    def unitary(cls, u: ComplexMatrix) -> KrausChannel:
        """Single-operator channel."""
        return cls((np.asarray(u, dtype=complex),))

    def on(self, subsystem: Subsystem) -> KrausChannel:
        """Lift a qubit channel to the photon (x) ion space.

        :param subsystem: Which factor the channel acts on.
        :return: The 4-dimensional channel.
        """
        if self.dim != 2:
            raise DimensionMismatchError(2, self.dim)
        if subsystem == "photon":
            return KrausChannel(tuple(np.kron(k, PAULI_I) for k in self.operators))
        return KrausChannel(tuple(np.kron(PAULI_I, k) for k in self.operators))

    def apply(self, rho: DensityMatrix) -> DensityMatrix:
        """Apply the channel.

        :param rho: Input state.
        :return: sum_k K rho K^dagger.
        """
        if rho.dim != self.dim:
            raise DimensionMismatchError(self.dim, rho.dim)
        out = sum(k @ rho.matrix @ k.conj().T for k in self.operators)
        return DensityMatrix(_hermitize(out))

    def then(self, other: KrausChannel) -> KrausChannel:
        """Channel applying `self` first and `other` second."""
        if other.dim != self.dim:
            raise DimensionMismatchError(self.dim, other.dim)
        return KrausChannel(
            tuple(b @ a for a in self.operators for b in other.operators)
        )


def _check_unit(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ParameterRangeError(name, value, 0.0, 1.0)


def _hermitize(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


def tensor(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    """Kronecker product a (x) b.

    :param a: First factor (photon for link states).
    :param b: Second factor (ion for link states).
    :return: The product state.
    """
    return DensityMatrix(np.kron(a.matrix, b.matrix))


def partial_trace(rho: DensityMatrix, keep: Subsystem) -> DensityMatrix:
    """Reduce a photon (x) ion state to one qubit.

    :param rho: Two-qubit state.
    :param keep: Subsystem to keep.
    :return: The reduced state.
    """
    if rho.dim != 4:
        raise DimensionMismatchError(4, rho.dim)
    blocks = rho.matrix.reshape(2, 2, 2, 2)
    if keep == "ion":
        reduced = np.einsum("aiaj->ij", blocks)
    else:
        reduced = np.einsum("iaja->ij", blocks)
    return DensityMatrix(_hermitize(reduced))


def fidelity(rho: DensityMatrix, psi: PureState) -> float:
    """<psi| rho |psi>.

    :param rho: Mixed state.
    :param psi: Pure target.
    :return: Fidelity in [0, 1].
    """
    if rho.dim != psi.dim:
        raise DimensionMismatchError(psi.dim, rho.dim)
    value = np.vdot(psi.amplitudes, rho.matrix @ psi.amplitudes)
    return float(min(max(value.real, 0.0), 1.0))


def purity(rho: DensityMatrix) -> float:
    """Tr(rho^2)."""
    return float(np.einsum("ij,ji->", rho.matrix, rho.matrix).real)


def depolarize(rho: DensityMatrix, lam: float) -> DensityMatrix:
    """lam * rho + (1 - lam) * I / d.

    :param rho: Input state.
    :param lam: Channel parameter in [0, 1].
    :return: The depolarized state.
    """
    _check_unit("lambda", lam)
    eye = np.eye(rho.dim, dtype=complex) / rho.dim
    return DensityMatrix(lam * rho.matrix + (1 - lam) * eye)


def dephase(
    rho: DensityMatrix,
    pair: tuple[int | Sequence[int], int | Sequence[int]],
    gamma: float,
) -> DensityMatrix:
    """Scale the coherences between two index blocks by `gamma`.

    :param rho: Input state.
    :param pair: Two basis indices, or two groups of indices.
    :param gamma: Coherence factor in [0, 1].
    :return: The dephased state.
    """
    _check_unit("gamma", gamma)
    first = np.atleast_1d(np.asarray(pair[0], dtype=int))
    second = np.atleast_1d(np.asarray(pair[1], dtype=int))
    out = np.array(rho.matrix)
    out[np.ix_(first, second)] *= gamma
    out[np.ix_(second, first)] *= gamma
    return DensityMatrix(out)


def dephase_ion(rho: DensityMatrix, gamma: float) -> DensityMatrix:
    """Dephase the ion qubit of a photon (x) ion state."""
    return dephase(rho, (ION_ZERO, ION_ONE), gamma)


def max_fidelity_bound(p: float) -> float:
    """Largest two-qubit pure-state fidelity compatible with purity `p`.

    :param p: Purity, at least 1/4.
    :return: (1 + sqrt(3 (4p - 1))) / 4.
    """
    if p < 0.25:
        raise ParameterRangeError("purity", p, 0.25, 1.0)
    return (1.0 + np.sqrt(3.0 * (4.0 * p - 1.0))) / 4.0


def psd_project(h: ComplexMatrix) -> DensityMatrix:
    """Clip negative eigenvalues of a Hermitian matrix and renormalize.

    :param h: Hermitian matrix.
    :return: Nearest-spectrum density matrix.
    """
    h = np.asarray(h, dtype=complex)
    if np.max(np.abs(h - h.conj().T)) > HERMITIAN_TOL:
        raise InvalidStateError("projection input is not Hermitian")
    values, vectors = linalg.eigh(_hermitize(h))
    clipped = np.clip(values, 0.0, None)
    total = clipped.sum()
    if total <= 0.0:
        raise ZeroProjectionError()
    clipped /= total
    logger.debug("Clipped %d negative eigenvalues", int((values < 0).sum()))
    return DensityMatrix(_hermitize((vectors * clipped) @ vectors.conj().T))


def mix(states: Sequence[tuple[float, DensityMatrix]]) -> DensityMatrix:
    """Convex combination of states with weights summing to 1."""
    total = sum(w for w, _ in states)
    return DensityMatrix(_hermitize(sum(w * s.matrix for w, s in states) / total))
