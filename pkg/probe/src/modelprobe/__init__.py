"""Local causal-LM probe answering JSONL scoring and generation requests."""

from .session import (
    ModelLoadError,
    ProbeSession,
    TokenizationError,
    UnknownCase,
    load_prefix_map,
    read_requests,
    write_responses,
)

__all__ = [
    "ModelLoadError",
    "ProbeSession",
    "TokenizationError",
    "UnknownCase",
    "load_prefix_map",
    "read_requests",
    "write_responses",
]
