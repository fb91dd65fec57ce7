class BilocalToolkitException(Exception):
    """General bilocaltk exception."""

    pass


class InvalidStateError(BilocalToolkitException):
    """Exception that is raised if a matrix is not a valid density matrix or observable."""

    pass


class InvalidPovmError(BilocalToolkitException):
    """Exception that is raised if a list of effects does not form a valid POVM."""

    pass


class DimensionMismatch(BilocalToolkitException):
    """Exception that is raised if operands have incompatible dimensions or an index is out of range."""

    pass


class VisibilityOutOfRange(BilocalToolkitException):
    """Exception that is raised if a visibility or probability parameter leaves its allowed range."""

    def __init__(self, value, name="v", low=0.0, high=1.0, *args):
        super().__init__(*args)
        self.value = value
        """The offending value."""
        self.name = name
        self.low = low
        self.high = high

    def __str__(self):
        return f"{self.name} = {self.value} is outside [{self.low}, {self.high}]"


class UnknownScenario(BilocalToolkitException):
    """Exception that is raised if a scenario name is not registered."""

    def __init__(self, name, valid=(), *args):
        super().__init__(*args)
        self.name = name
        self.valid = tuple(valid)

    def __str__(self):
        return f"Unknown scenario '{self.name}'. Valid options: {', '.join(self.valid)}."


class HeraldNeverFires(BilocalToolkitException):
    """Exception that is raised when conditioning on a Bob outcome that (numerically) never occurs."""

    def __init__(self, label, probability, *args):
        super().__init__(*args)
        self.label = label
        """The herald label that was requested."""
        self.probability = probability
        """The herald probability that was computed."""

    def __str__(self):
        return f"Herald {self.label} fires with probability {self.probability:.3e}"


class ArityError(BilocalToolkitException):
    """Exception that is raised if a distribution has the wrong Bob alphabet for an inequality."""

    def __init__(self, expected, actual, *args):
        super().__init__(*args)
        self.expected = expected
        self.actual = actual

    def __str__(self):
        return f"Expected a Bob alphabet of size {self.expected}, got {self.actual}"


class InvalidModelError(BilocalToolkitException):
    """Exception that is raised for malformed hidden-variable models."""

    pass


class InvalidCountsError(BilocalToolkitException):
    """Exception that is raised for empty or inconsistent coincidence tables."""

    pass


class ConfigurationError(BilocalToolkitException):
    """Exception that is raised if a configuration file or value cannot be used."""

    pass
