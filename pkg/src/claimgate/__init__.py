"""Training-free hallucination mitigation for yes/no visual questions.

The engine decomposes an initial answer into typed, checkable claims,
grounds their targets with a promptable segmentation backend, derives cited
evidence, has a judge model verify each claim, and only lets the answer
change when a confident, cited verdict justifies it.
"""

from .backends import (
    BackendRole,
    Backends,
    BackendUnavailable,
    CacheMiss,
    ChatMessage,
    ChatRequest,
    ChatResponse,
    HttpChatBackend,
    HttpSegmentBackend,
    MalformedResponse,
    RecordingChatBackend,
    RecordingSegmentBackend,
    ReplayChatBackend,
    ReplaySegmentBackend,
    ResponseStore,
    ScriptedChatBackend,
    SegmentRequest,
    replay_backends,
)
from .config import ConfigError, GateConfig, apply_overrides, load_config, save_config
from .engine import (
    fallback_claim,
    gate_update,
    initialize,
    next_claims,
    regate_trace,
    run_many,
    run_sample,
    should_stop,
)
from .evidence import EvidenceRegistry, RoundEvidenceBuilder
from .grounding import GroundedInstance, GroundingClient, GroundingResult
from .model import (
    BinaryAnswer,
    Claim,
    ClaimCheck,
    ClaimType,
    CheckStatus,
    EvidenceItem,
    EvidenceKind,
    GateDecision,
    InvalidTarget,
    RoundRecord,
    RunTrace,
    Sample,
    StopReason,
    VerificationReport,
    normalize_target,
    validate_claim,
)
from .parsing import ParseFailure, SchemaViolation, parse_constrained_json, repair_and_parse
from .prompts import (
    build_init_prompt,
    build_refine_prompt,
    build_verify_prompt,
    build_yes_guard_prompt,
    route_claim_type,
    template_versions,
)
from .verification import consolidate, validate_citations, verify_round

__version__ = "0.1.0"

__all__ = [
    "BackendRole",
    "Backends",
    "BackendUnavailable",
    "BinaryAnswer",
    "CacheMiss",
    "ChatMessage",
    "ChatRequest",
    "ChatResponse",
    "CheckStatus",
    "Claim",
    "ClaimCheck",
    "ClaimType",
    "ConfigError",
    "EvidenceItem",
    "EvidenceKind",
    "EvidenceRegistry",
    "GateConfig",
    "GateDecision",
    "GroundedInstance",
    "GroundingClient",
    "GroundingResult",
    "HttpChatBackend",
    "HttpSegmentBackend",
    "InvalidTarget",
    "MalformedResponse",
    "ParseFailure",
    "RecordingChatBackend",
    "RecordingSegmentBackend",
    "ReplayChatBackend",
    "ReplaySegmentBackend",
    "ResponseStore",
    "RoundEvidenceBuilder",
    "RoundRecord",
    "RunTrace",
    "Sample",
    "SchemaViolation",
    "ScriptedChatBackend",
    "SegmentRequest",
    "StopReason",
    "VerificationReport",
    "apply_overrides",
    "build_init_prompt",
    "build_refine_prompt",
    "build_verify_prompt",
    "build_yes_guard_prompt",
    "consolidate",
    "fallback_claim",
    "gate_update",
    "initialize",
    "load_config",
    "next_claims",
    "normalize_target",
    "parse_constrained_json",
    "regate_trace",
    "repair_and_parse",
    "replay_backends",
    "route_claim_type",
    "run_many",
    "run_sample",
    "save_config",
    "should_stop",
    "template_versions",
    "validate_citations",
    "validate_claim",
    "verify_round",
]
