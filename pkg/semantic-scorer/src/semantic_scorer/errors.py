class ScorerError(Exception):
    """Base for all scorer failures."""


class ModelUnavailable(ScorerError):
    """The requested embedding model cannot be loaded on this machine."""


class FormatMismatch(ScorerError):
    """An input file does not match the expected record format."""


class MissingResponse(ScorerError):
    """The response file lacks entries for one or more sample ids."""

    def __init__(self, missing_ids):
        ids = sorted(missing_ids)
        preview = ", ".join(str(i) for i in ids[:10])
        more = "" if len(ids) <= 10 else f" (+{len(ids) - 10} more)"
        super().__init__(f"no response for sample ids: {preview}{more}")
        self.missing_ids = ids


class MalformedRecord(ScorerError):
    """An input line fails schema validation."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number
