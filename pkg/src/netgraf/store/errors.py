"""Store error types."""


class StoreError(Exception):
    pass


class OutOfOrderAppend(StoreError):
    """Append older than the series tail; defense against pipeline bugs."""


class StoreClosed(StoreError):
    pass


class IoError(StoreError):
    pass


class InvalidSelector(StoreError):
    pass


class InvalidRange(StoreError):
    pass


class CorruptSegment(StoreError):
    def __init__(self, file: str, offset: int, reason: str = ""):
        super().__init__(f"corrupt segment {file} at offset {offset}: {reason}")
        self.file = file
        self.offset = offset
        self.reason = reason
