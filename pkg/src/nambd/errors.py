"""Exception hierarchy shared by every nambd module."""


class NamError(Exception):
    """Base class for all library errors."""


class OrderingViolation(NamError, ValueError):
    pass


class NonPositiveDiffusion(NamError, ValueError):
    pass


class NonPositiveRadius(NamError, ValueError):
    pass


class NonPositiveInput(NamError, ValueError):
    pass


class OmegaOutOfRange(NamError, ValueError):
    pass


class EmptySample(NamError, ValueError):
    pass


class EmptyExperiment(NamError, ValueError):
    pass


class QuadratureNonConvergence(NamError, ArithmeticError):
    pass


class DivergentIntegral(NamError, ArithmeticError):
    pass


class SingularPotential(NamError, ArithmeticError):
    pass


class StepLimitExceeded(NamError, RuntimeError):
    """A trajectory ran past the configured step cap without terminating."""


class InvalidConfig(NamError, ValueError):
    pass


class NotNamShaped(NamError, ValueError):
    """A parsed model is valid SpacePi but cannot be lowered to a NAM setup."""


class ModelError(NamError, ValueError):
    """Parse/validation diagnostic carrying a source location."""

    kind = "ModelError"

    def __init__(self, message, line=None, column=None):
        self.message = message
        self.line = line
        self.column = column
        loc = f"{line}:{column}: " if line is not None else ""
        super().__init__(f"{loc}{self.kind}: {message}")


class SpiSyntaxError(ModelError):
    kind = "SyntaxError"

    def __init__(self, message, line=None, column=None, expected=()):
        self.expected = tuple(expected)
        if self.expected:
            message = f"{message} (expected {', '.join(self.expected)})"
        super().__init__(message, line, column)


class UndeclaredName(ModelError):
    kind = "UndeclaredName"


class DuplicateDeclaration(ModelError):
    kind = "DuplicateDeclaration"


class MissingSection(ModelError):
    kind = "MissingSection"

    def __init__(self, section, line=None, column=None):
        self.section = section
        super().__init__(f"missing section {section!r}", line, column)
