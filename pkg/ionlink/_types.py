"""Provides array aliases and literal types used throughout lib."""
from typing import Literal, TypeAlias

import numpy as np
import numpy.typing as npt

ComplexMatrix: TypeAlias = npt.NDArray[np.complex128]
RealArray: TypeAlias = npt.NDArray[np.float64]
PhotonBasis = Literal["H", "D", "R"]
IonBasis = Literal["Z", "X", "Y"]
Branch = Literal["desired", "error"]
Outcome = Literal["bright", "dark"]
ReadoutPass = Literal[1, 2]
Subsystem = Literal["photon", "ion"]
ReadoutCorrection = Literal["none", "before", "inside"]

PHOTON_BASES: tuple[PhotonBasis, ...] = ("H", "D", "R")
ION_BASES: tuple[IonBasis, ...] = ("Z", "X", "Y")
