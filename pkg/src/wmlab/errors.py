"""Exception hierarchy shared across the package.

Every operation contract names the error it raises; they all derive from
``WmLabError`` so callers (and the CLI) can map failures to exit codes.
"""


class WmLabError(Exception):
    """Base class for all package errors."""


class ConfigError(WmLabError):
    """Invalid experiment / scheme / rule-set configuration."""


# --- minilang ---------------------------------------------------------------

class LexError(WmLabError):
    def __init__(self, position, lexeme):
        super().__init__(f"unknown lexeme {lexeme!r} at position {position}")
        self.position = position
        self.lexeme = lexeme


class ParseError(WmLabError):
    def __init__(self, position, expected, found=None):
        super().__init__(f"at token {position}: expected {expected}, found {found!r}")
        self.position = position
        self.expected = expected
        self.found = found


class ArityError(WmLabError):
    pass


class EmptyInputError(WmLabError):
    pass


# --- model / watermark ------------------------------------------------------

class InvalidPrefixError(WmLabError):
    pass


class DistributionError(WmLabError):
    """Weights are not a probability distribution."""


class ContextLengthError(WmLabError):
    pass


class WrongLengthError(WmLabError):
    pass


class TooShortError(WmLabError):
    """No scorable positions remain after context/entropy gating."""


class OutOfRangeError(WmLabError):
    pass


# --- rules ------------------------------------------------------------------

class IllegalActionError(WmLabError):
    pass


class NotCanonicalError(WmLabError):
    pass


class SpaceTooSmallError(WmLabError):
    pass


# --- chain ------------------------------------------------------------------

class CapExceededError(WmLabError):
    def __init__(self, cap):
        super().__init__(f"state enumeration exceeded cap {cap}")
        self.cap = cap


class NotErgodicError(WmLabError):
    pass


class DimensionMismatchError(WmLabError):
    pass


class NotConvergedError(WmLabError):
    def __init__(self, max_steps):
        super().__init__(f"did not converge within {max_steps} steps")
        self.max_steps = max_steps


class DegreeAsymmetryError(WmLabError):
    pass


class TooLargeError(WmLabError):
    pass


# --- stats ------------------------------------------------------------------

class NonFiniteError(WmLabError):
    pass


class TooFewSamplesError(WmLabError):
    pass
