"""Exception hierarchy for clearrec."""


class ClearRecError(Exception):
    """Base class for all clearrec errors."""


# --- event ingestion ---

class UnknownKindError(ClearRecError):
    """Event kind is not present in the kind registry."""


class InvalidTimestampError(ClearRecError):
    """Timestamp is non-finite or too far in the future."""


class NegativeValueError(ClearRecError):
    """Event value must be >= 0 when present."""


class MalformedEventError(ClearRecError):
    """Event line could not be parsed (strict mode)."""


# --- co-occurrence engine ---

class AllZeroError(ClearRecError):
    """All four contingency cells are zero; the statistic is undefined."""


class MissingPrimaryMatrixError(ClearRecError):
    """No interaction matrix exists for the requested conversion kind."""


class VersionMismatchError(ClearRecError):
    """Serialized model was written by an incompatible (newer) major version."""


class CorruptPayloadError(ClearRecError):
    """Serialized model failed checksum or structural validation."""


# --- blending ---

class NoCandidatesError(ClearRecError):
    """Neither co-occurrence scores nor catalog contribute any candidate."""


# --- rules ---

class RuleCompileError(ClearRecError):
    """Base class for rule-compilation failures; carries a position string."""

    def __init__(self, message: str, position: str = ""):
        super().__init__(f"{position}: {message}" if position else message)
        self.position = position


class MissingDisclosureError(RuleCompileError):
    """BOOST rule without non-empty disclosure text."""


class DuplicateRuleIdError(RuleCompileError):
    """Two rules in one set share a rule_id."""


class MalformedPredicateError(RuleCompileError):
    """Condition or target AST node is not understood."""


class MissingContextKeyError(ClearRecError):
    """A predicate declared a context key as required and it is absent."""


# --- transparency ---

class UnknownFrameError(ClearRecError):
    """Frame id is not configured."""


class ModelNotLoadedError(ClearRecError):
    """A personalized/co-occurrence frame was requested before training."""


class NoPriceDataError(ClearRecError):
    """No price point falls inside the reference window."""


class UnknownItemError(ClearRecError):
    """Item id could not be resolved against the catalog."""


class DisclosureMismatchError(ClearRecError):
    """Declared data categories diverge from the instrumented read trace."""


# --- audit ---

class InvalidSpecError(ClearRecError):
    """Synthetic shop spec violates its invariants."""


class SingleGroupError(ClearRecError):
    """Exposure bias needs at least two non-empty protected groups."""


# --- service ---

class UnknownUserError(ClearRecError):
    """User id has no events and no stored controls."""
