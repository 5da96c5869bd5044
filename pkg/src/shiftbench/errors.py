class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


class EmptyCandidates(LookupError):
    """A dependency protocol produced no candidate roots."""


class PlanError(ValueError):
    """A re-cluster plan would overfill a page or references unknown objects."""


class AnalysisError(ValueError):
    """A root trace lacks the annotations needed for analysis."""
