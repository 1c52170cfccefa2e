"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes (config 2, data 3, divergence 4), so
library code should raise the most specific class that applies.
"""


class HybridBootError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(HybridBootError):
    """Tensor extents do not compose; the message names both shapes."""


class LayerShapeError(ShapeError):
    """Layer composition failure; carries the offending layer index."""

    def __init__(self, layer_index, message):
        super().__init__(f"layer {layer_index}: {message}")
        self.layer_index = layer_index


class InvalidLevelError(HybridBootError):
    """Corruption level outside its legal range (e.g. normalize at p=1)."""


class InsufficientBatchError(HybridBootError):
    """Batch too small for a distinct partner (hybrid needs m >= 2)."""


class DivergenceError(HybridBootError):
    """Non-finite parameters or gradients during training.

    ``history`` holds the per-epoch rows completed before the halt.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history if history is not None else []


class StaleActivationsError(HybridBootError):
    """backward() received activations that do not match the model."""


class FormatError(HybridBootError):
    """Binary file format violation; carries the byte offset."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class IdxFormatError(FormatError):
    """IDX (MNIST) file violates the format contract."""


class CheckpointFormatError(FormatError):
    """Model checkpoint file violates the format contract."""


class CsvParseError(HybridBootError):
    """CSV structure violation; carries the 1-based row number."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row


class InsufficientClassError(HybridBootError):
    """A class has fewer members than its stratified quota."""


class DegenerateChannelError(HybridBootError):
    """Zero-variance channel encountered during standardization."""


class DegenerateLayerError(HybridBootError):
    """All filters of a layer have zero variance on the probe set."""


class InsufficientDataError(HybridBootError):
    """Dataset too small for the requested operation."""


class ConfigError(HybridBootError):
    """Invalid or incomplete experiment configuration."""
