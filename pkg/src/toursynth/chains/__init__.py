"""Stage 3: quarter-hour activity chain generation, validation, and repair."""

from .taxonomy import (
    SLOTS_PER_DAY,
    ActivityChain,
    ActivityEpisode,
    ActivityType,
    chain_to_text,
    load_chains,
    save_chains,
)
from .client import (
    BackendError,
    FallbackBackend,
    GenContext,
    GenRequest,
    GenResponse,
    PayloadError,
    RemoteBackend,
    StatusError,
    TimeoutError_,
    call_generator,
)
from .fallback import fallback_generate
from .generate import BUSINESS_PURPOSES, ChainGenerator, household_expand
from .prompt import build_prompt
from .validate import (
    ChainDiagnostics,
    ChainParseError,
    Violation,
    day_ward_orders,
    fill_gaps,
    parse_chain,
    validate_chain,
)

__all__ = [
    "SLOTS_PER_DAY",
    "ActivityChain",
    "ActivityEpisode",
    "ActivityType",
    "BUSINESS_PURPOSES",
    "BackendError",
    "ChainDiagnostics",
    "ChainGenerator",
    "ChainParseError",
    "FallbackBackend",
    "GenContext",
    "GenRequest",
    "GenResponse",
    "PayloadError",
    "RemoteBackend",
    "StatusError",
    "TimeoutError_",
    "Violation",
    "build_prompt",
    "call_generator",
    "chain_to_text",
    "day_ward_orders",
    "fallback_generate",
    "fill_gaps",
    "household_expand",
    "load_chains",
    "parse_chain",
    "save_chains",
    "validate_chain",
]
