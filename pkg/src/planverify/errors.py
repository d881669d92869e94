"""Exception types shared across the package."""


class PlanVerifyError(Exception):
    """Base class for every error raised by this package."""


# --- proposition / formula layer ------------------------------------------

class MalformedAp(PlanVerifyError):
    """Atomic proposition text does not follow the six-field form."""


class LtlfSyntaxError(PlanVerifyError):
    """Formula text failed to parse; carries the character position."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class UnknownProposition(LtlfSyntaxError):
    """Formula references a name with no binding."""


class AlphabetTooLarge(PlanVerifyError):
    """Explicit automaton construction would exceed the valuation-class cap."""


class TranslationError(PlanVerifyError):
    """Structured constraint could not be translated to a formula."""


# --- plan layer -------------------------------------------------------------

class PlanError(PlanVerifyError):
    """Base class for plan validation failures."""


class CyclicPlan(PlanError):
    """Precedence edges contain a cycle."""


class DanglingPredecessor(PlanError):
    """A task lists a predecessor id that does not exist."""


class UnknownResource(PlanError):
    """A task names a resource missing from the resource set."""


class CapabilityMismatch(PlanError):
    """A task's function is not a capability of its assigned resource."""


class EventNotEnabled(PlanVerifyError):
    """apply_event was asked to fire a transition the state does not enable."""


class StateBudgetExceeded(PlanVerifyError):
    """State-space exploration hit its budget; result is inconclusive.

    Never interpreted as safe. Carries whatever was established before the
    budget ran out so callers can report a partial result.
    """

    def __init__(self, message, explored=None, partial_report=None):
        super().__init__(message)
        self.explored = explored
        self.partial_report = partial_report


class TooLargeForOracle(PlanVerifyError):
    """Plan exceeds the brute-force enumeration bound."""


# --- repair layer -----------------------------------------------------------

class PlannerError(PlanVerifyError):
    """A planner produced no usable repaired plan for this attempt."""

    def __init__(self, message, attempt=None):
        super().__init__(message)
        self.attempt = attempt


class TransportError(PlannerError):
    """The LLM endpoint was unreachable or returned a non-2xx status."""


class SchemaError(PlannerError):
    """The planner reply violated the output schema."""


class Unrepairable(PlannerError):
    """No predecessor edit can discharge the reported violation."""


class UnresolvableProposition(PlannerError):
    """A constraint proposition matches no task in the plan."""


class UnrecognizedRequirement(PlanVerifyError):
    """Natural-language requirement matched no translation rule."""


class InfeasibleSpec(PlanVerifyError):
    """Scenario spec asks for more rules than distinct task pairs exist."""
