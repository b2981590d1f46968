"""Exception hierarchy. Every error carries a short machine-parseable category
used by the CLI for its one-line failure output."""


class SelContrastError(Exception):
    category = "internal"


class ConfigError(SelContrastError):
    """Bad configuration: unknown keys, dimension mismatches, invalid values."""

    category = "config"


class InputError(SelContrastError):
    """Bad runtime input, e.g. non-finite feature values."""

    category = "input"


class FormatError(SelContrastError):
    """Malformed external file (IDX, CSV, checkpoint)."""

    category = "format"


class DegenerateEmbeddingError(SelContrastError):
    """A feature embedding with zero norm cannot be normalized."""

    category = "degenerate-embedding"


class EmptyPositiveSetError(SelContrastError):
    """Contrastive loss is undefined for an anchor with no positives."""

    category = "empty-positives"


class TrainingDivergenceError(SelContrastError):
    """Non-finite loss, gradient or parameter encountered during training."""

    category = "training-divergence"


class UndefinedRiskError(SelContrastError):
    """Selective risk is undefined when no sample is selected."""

    category = "undefined-risk"
