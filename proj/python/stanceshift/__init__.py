"""Python access to the stanceshift harness core.

Structured values are plain dicts and lists with the same shape as the JSON
files the harness reads and writes.
"""

from ._stanceshift import (
    StanceshiftError,
    category_aggregates,
    load_question_set,
    load_records,
    parse_score,
    plan,
    question_metrics,
    report,
    resume,
    run,
    select_biased_side,
    try_parse_score,
    validate_question_set,
)

__all__ = [
    "StanceshiftError",
    "category_aggregates",
    "load_question_set",
    "load_records",
    "parse_score",
    "plan",
    "question_metrics",
    "report",
    "resume",
    "run",
    "select_biased_side",
    "try_parse_score",
    "validate_question_set",
]
