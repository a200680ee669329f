"""IonLink Errors."""


class IonLinkError(Exception):
    """Base class for every error raised by ionlink."""

    def __init__(self, msg: str) -> None:
        """Init IonLinkError.

        :param msg: Error message.
        """
        super(IonLinkError, self).__init__(msg)


class ConfigurationError(IonLinkError):
    """Raised for mal-configured inputs or scenarios."""

    def __init__(self, msg: str) -> None:
        """Init ConfigurationError.

        :param msg: Error message.
        """
        super(ConfigurationError, self).__init__(msg)


class ParameterRangeError(ConfigurationError):
    """Raised when a scalar parameter lies outside its allowed range."""

    def __init__(
        self, name: str, value: float, lower: float, upper: float | None = None
    ) -> None:
        """Init ParameterRangeError.

        :param name: Parameter name.
        :param value: Offending value.
        :param lower: Smallest allowed value.
        :param upper: Largest allowed value, `None` if unbounded.
        """
        bound = f"[{lower}, {upper}]" if upper is not None else f">= {lower}"
        super(ParameterRangeError, self).__init__(
            f'Parameter "{name}" must be {bound}, got {value}.'
        )


class DimensionMismatchError(ConfigurationError):
    """Raised when operands have incompatible Hilbert-space dimensions."""

    def __init__(self, expected: int, actual: int) -> None:
        """Init DimensionMismatchError.

        :param expected: Dimension required by the operation.
        :param actual: Dimension received.
        """
        super(DimensionMismatchError, self).__init__(
            f"Expected dimension {expected}, got {actual}."
        )


class InvalidStateError(ConfigurationError):
    """Raised when a matrix or vector is not a valid quantum state."""

    def __init__(self, reason: str) -> None:
        """Init InvalidStateError.

        :param reason: Which state invariant failed.
        """
        super(InvalidStateError, self).__init__(f"Invalid quantum state: {reason}.")


class EmptyWindowError(ConfigurationError):
    """Raised when a time window holds no grid points or no density."""

    def __init__(self, t_i: float, t_f: float) -> None:
        """Init EmptyWindowError.

        :param t_i: Window start in ns.
        :param t_f: Window end in ns.
        """
        super(EmptyWindowError, self).__init__(
            f"Window [{t_i}, {t_f}] ns does not overlap the emission support."
        )


class UnknownTransitionError(ConfigurationError):
    """Raised when a beam or query references a transition the system lacks."""

    def __init__(self, lower: str, upper: str) -> None:
        """Init UnknownTransitionError.

        :param lower: Lower manifold label.
        :param upper: Upper manifold label.
        """
        super(UnknownTransitionError, self).__init__(
            f'No dipole transition "{upper}" -> "{lower}" in the level system.'
        )


class StepSizeError(ConfigurationError):
    """Raised when an integration step is too coarse for the fastest rate."""

    def __init__(self, dt: float, limit: float) -> None:
        """Init StepSizeError.

        :param dt: Requested step in us.
        :param limit: Largest permitted step in us.
        """
        super(StepSizeError, self).__init__(
            f"Step {dt} us exceeds the stability limit {limit} us."
        )


class MissingSettingError(ConfigurationError):
    """Raised when a tomography dataset lacks a measurement setting."""

    def __init__(self, photon: str, ion: str) -> None:
        """Init MissingSettingError.

        :param photon: Photon analysis basis.
        :param ion: Ion measurement basis.
        """
        super(MissingSettingError, self).__init__(
            f'Dataset has no counts for setting photon="{photon}", ion="{ion}".'
        )


class MissingSeedError(ConfigurationError):
    """Raised when a stochastic command runs without a seed."""

    def __init__(self, command: str) -> None:
        """Init MissingSeedError.

        :param command: Name of the stochastic command.
        """
        super(MissingSeedError, self).__init__(
            f'Command "{command}" is stochastic and needs a scenario seed.'
        )


class NumericalError(IonLinkError):
    """Raised when a numerical procedure fails."""

    def __init__(self, msg: str) -> None:
        """Init NumericalError.

        :param msg: Error message.
        """
        super(NumericalError, self).__init__(msg)


class ConvergenceError(NumericalError):
    """Raised when an iterative procedure stops before converging."""

    def __init__(self, procedure: str, iterations: int) -> None:
        """Init ConvergenceError.

        :param procedure: Name of the procedure.
        :param iterations: Iterations spent.
        """
        super(ConvergenceError, self).__init__(
            f'"{procedure}" did not converge after {iterations} iterations.'
        )


class SingularReadoutError(NumericalError):
    """Raised when the readout correction system cannot be inverted."""

    def __init__(self, condition: float) -> None:
        """Init SingularReadoutError.

        :param condition: Condition number of the system matrix.
        """
        super(SingularReadoutError, self).__init__(
            f"Readout correction matrix is singular (condition number {condition:.3g})."
        )


class ZeroProjectionError(NumericalError):
    """Raised when clipping negative eigenvalues leaves nothing to normalize."""

    def __init__(self) -> None:
        """Init ZeroProjectionError."""
        super(ZeroProjectionError, self).__init__(
            "Matrix has no positive eigenvalues; cannot project to a density matrix."
        )
