"""Attention probe for boundary-symbol attraction and cross-segment suppression."""

from .probe import (
    AlignmentError,
    AttentionStats,
    CapabilityError,
    ProbeError,
    ProbeSpec,
    direction_summary,
    emit,
    probe,
    render_with_spans,
    schema_path,
    validate_stats,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "AttentionStats",
    "CapabilityError",
    "ProbeError",
    "ProbeSpec",
    "direction_summary",
    "emit",
    "probe",
    "render_with_spans",
    "schema_path",
    "validate_stats",
    "__version__",
]
