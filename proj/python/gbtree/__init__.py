"""Gated behavior tree runtime: python surface over the C++ core."""

from ._core import (  # noqa: F401
    canonicalize_path,
    canonicalize_resource,
    classify_hard,
    distill_to_dir,
    edge_cost,
    embed_cosine,
    eval_gate,
    generate_scenarios,
    parse_gate,
    route,
    run_report,
    score,
)

__all__ = [
    "canonicalize_path",
    "canonicalize_resource",
    "classify_hard",
    "distill_to_dir",
    "edge_cost",
    "embed_cosine",
    "eval_gate",
    "generate_scenarios",
    "parse_gate",
    "route",
    "run_report",
    "score",
]
