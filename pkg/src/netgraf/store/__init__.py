from .errors import (
    CorruptSegment,
    InvalidRange,
    InvalidSelector,
    IoError,
    OutOfOrderAppend,
    StoreClosed,
    StoreError,
)
from .selector import Selector, parse_selector
from .store import (
    Aggregator,
    Chunk,
    PurgeReport,
    QueryFrame,
    RetentionPolicy,
    RetentionRule,
    SeriesStore,
    downsample,
    rate,
)

__all__ = [
    "Aggregator",
    "Chunk",
    "CorruptSegment",
    "InvalidRange",
    "InvalidSelector",
    "IoError",
    "OutOfOrderAppend",
    "PurgeReport",
    "QueryFrame",
    "RetentionPolicy",
    "RetentionRule",
    "Selector",
    "SeriesStore",
    "StoreClosed",
    "StoreError",
    "downsample",
    "parse_selector",
    "rate",
]
