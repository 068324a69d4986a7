"""Exception hierarchy shared by all meyerrep modules."""


class MeyerRepError(Exception):
    """Base class for all library errors."""


# --- tree / partition construction -------------------------------------

class BadWeights(MeyerRepError):
    """Outcome probabilities are nonpositive or do not sum to one."""


class NonRefining(MeyerRepError):
    """Filtration partition at time t does not refine the one at t-1."""


class MeyerOutOfBand(MeyerRepError):
    """Meyer partition at time t is not between F_{t-1} and F_t."""


class ShapeMismatch(MeyerRepError):
    """Array argument has the wrong shape for the tree."""


class NotAStoppingTime(MeyerRepError):
    """A (time, phase) assignment violates the measurability predicate."""


class TooLarge(MeyerRepError):
    """An exhaustive enumeration would exceed the configured cap."""


# --- processes ----------------------------------------------------------

class EmptyWindow(MeyerRepError):
    """Running-sup window ends before it starts."""


class BadWindow(MeyerRepError):
    """Cost-integration window is malformed."""


class InvalidInput(MeyerRepError):
    """Solver input fails a hard precondition."""


# --- snell / divided stopping -------------------------------------------

class ClassificationInconsistent(MeyerRepError):
    """Contact classification failed the divided-stopping-time invariants."""


class InvalidDividedTime(MeyerRepError):
    """Quadruple violates the divided-stopping-time invariants."""


class InvalidSignal(MeyerRepError):
    """Signal process fails its structural invariants."""


# --- representation -----------------------------------------------------

class BracketFailure(MeyerRepError):
    """Bisection bracket never produced a sign change; hypotheses violated."""


class NotStrictlyLater(MeyerRepError):
    """Stopping time T is not strictly later than S on {S < infinity}."""


class CandidateNotASolution(MeyerRepError):
    """Candidate signal process fails the representation identity."""


class SolveFailure(MeyerRepError):
    """construct_L could not produce a verified solution."""


# --- levy ----------------------------------------------------------------

class BadConfig(MeyerRepError):
    """Monte Carlo configuration is invalid."""


class DegenerateSensor(MeyerRepError):
    """Sensor threshold gives p(eta) outside (0, 1)."""


class NonMonotoneControl(MeyerRepError):
    """Control trajectory decreases somewhere."""


# --- cli -------------------------------------------------------------------

class ParseError(MeyerRepError):
    """Scenario file could not be parsed; carries a location."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
