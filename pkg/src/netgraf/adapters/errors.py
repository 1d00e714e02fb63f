"""Adapter error types. All are contained by the pipeline: a failed fetch
marks the scrape failed and never takes the daemon down.
"""


class AdapterError(Exception):
    pass


class Unreachable(AdapterError):
    """Connection refused, reset, or host unreachable."""


class Timeout(AdapterError):
    pass


class HttpStatus(AdapterError):
    def __init__(self, code: int):
        super().__init__(f"unexpected HTTP status {code}")
        self.code = code


class ParseError(AdapterError):
    """Exposition-text parse failure; aborts the whole scrape."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class MalformedResponse(AdapterError):
    pass


class ToolError(AdapterError):
    """The tool answered but reported its own failure code."""

    def __init__(self, rc: int):
        super().__init__(f"tool returned rc={rc}")
        self.rc = rc


class AuthFailed(AdapterError):
    pass


class AuthExpired(AdapterError):
    """Session token no longer valid; caller may re-login once."""


class DuplicateTool(AdapterError):
    pass


class UnknownTool(AdapterError):
    pass
