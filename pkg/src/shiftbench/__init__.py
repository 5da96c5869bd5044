"""Workload-dynamics benchmark for dynamic object clustering."""

from .errors import AnalysisError, ConfigError, EmptyCandidates, PlanError
from .objectbase import DbParams, ObjectGraph, generate_database, simple_traversal

__all__ = [
    "AnalysisError",
    "ConfigError",
    "DbParams",
    "EmptyCandidates",
    "ObjectGraph",
    "PlanError",
    "generate_database",
    "simple_traversal",
]
