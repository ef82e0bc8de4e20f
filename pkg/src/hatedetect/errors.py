"""Shared exception types.

DataError covers every malformed external input (dataset TSVs, lexicon
files, embedding files, checkpoints) so the CLI can map the whole family
to one exit code. Contract misuse inside the API raises plain ValueError.
"""


class DataError(Exception):
    """Malformed external input file or value."""


class TrainingDivergedError(Exception):
    """Loss or gradients went non-finite during training."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
