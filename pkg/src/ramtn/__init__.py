"""Recursive adversarial meta-thinking engine.

A deterministic orchestration core for constructor-critic-observer reasoning
rounds over confidence-classified statements, portable cognitive framework
packages, and replayable session transcripts.
"""

from ramtn.protocol import (
    ConfidenceReport,
    ConfidenceRules,
    StatementClass,
    TripleLedger,
    adjudicate_round,
    adjudicate_statement,
    compute_confidence,
)
from ramtn.version import __version__

__all__ = [
    "ConfidenceReport",
    "ConfidenceRules",
    "StatementClass",
    "TripleLedger",
    "adjudicate_round",
    "adjudicate_statement",
    "compute_confidence",
    "__version__",
]
