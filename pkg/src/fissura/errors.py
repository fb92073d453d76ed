"""Exception types shared across the package."""


class FissuraError(Exception):
    """Base class for all fissura errors."""


class DimensionError(FissuraError):
    """Sizes or shapes are incompatible (window vs image, tensor vs backend)."""


class BoundsError(FissuraError):
    """A requested region lies outside the image."""


class AssetError(FissuraError):
    """A model asset file is missing or unloadable."""


class DescriptorError(FissuraError):
    """A backend descriptor disagrees with the loaded asset or model."""


class FormatError(FissuraError):
    """A binary file has the wrong magic or an unsupported version."""


class CorruptionError(FormatError):
    """A binary file is truncated, oversized, or was never finalized."""


class AppendError(FissuraError):
    """A row batch cannot be appended to a feature store."""


class StateError(FissuraError):
    """An operation was called in an invalid writer/reader state."""


class DataError(FissuraError):
    """Training or evaluation data violates a precondition."""


class DegenerateLabelsError(DataError):
    """Fewer than two distinct classes present in the training data."""


class StratificationError(FissuraError):
    """Cross-validation folds cannot be stratified over the given labels."""


class EmptyStoreError(FissuraError):
    """An operation requires a non-empty feature store."""


class ConfigurationError(FissuraError):
    """A runtime configuration value is invalid for the given model."""


class LayoutError(FissuraError):
    """The project directory layout is missing required pieces."""


class LabelError(FissuraError):
    """A label name is unknown to the model or project."""


class AnnotationError(FissuraError):
    """An annotation payload is degenerate or out of bounds."""
