"""Exception types shared across the package.

Every error raised on a user-facing path derives from Kg2ftError so the
CLI can catch one base class, log a structured record, and exit nonzero.
"""


class Kg2ftError(Exception):
    """Base class for all errors raised by this package."""


class DuplicateNode(Kg2ftError):
    """A node with the same id was already added to the graph."""


class UnknownNode(Kg2ftError):
    """An edge references a node id that is not in the graph."""


class UnknownRelation(Kg2ftError):
    """An edge references a relation name that was never registered."""


class SelfLoop(Kg2ftError):
    """An edge has the same node as head and tail."""


class MalformedInput(Kg2ftError):
    """An input row could not be parsed or fails schema validation."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class InvalidBudget(Kg2ftError):
    """A token or node budget parameter is outside its legal range."""


class InvalidRatio(Kg2ftError):
    """A split ratio is outside the open interval (0, 1)."""


class MissingTemplate(Kg2ftError):
    """A relation has no phrase or question template for a requested form."""


class BackendUnavailable(Kg2ftError):
    """The language-model backend failed after exhausting retries."""


class BudgetExceeded(Kg2ftError):
    """The run hit its ceiling of language-model backend calls."""


class InvalidRequest(Kg2ftError):
    """A language-model request fails validation before being sent."""


class NoDescribableContent(Kg2ftError):
    """A node has neither describable neighbors nor usable attributes."""


class InsufficientDistractorPool(Kg2ftError):
    """Too few type-compatible negatives exist to build a choice set."""


class FormatMismatch(Kg2ftError):
    """A dataset or response file does not match the expected format."""


class MissingResponse(Kg2ftError):
    """A response file lacks entries for one or more sample ids."""

    def __init__(self, missing_ids):
        ids = sorted(missing_ids)
        preview = ", ".join(str(i) for i in ids[:10])
        more = "" if len(ids) <= 10 else f" (+{len(ids) - 10} more)"
        super().__init__(f"no response for sample ids: {preview}{more}")
        self.missing_ids = ids


class MalformedSample(Kg2ftError):
    """A dataset record fails schema validation."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class ConfigError(Kg2ftError):
    """A config file could not be read or contains unknown/invalid keys."""


class PipelineError(Kg2ftError):
    """A build stage failed; carries (node, partition) provenance.

    The original error is chained as __cause__.
    """

    def __init__(self, message: str, node: str | None = None, partition: int | None = None):
        super().__init__(message)
        self.node = node
        self.partition = partition
