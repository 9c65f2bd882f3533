"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Operands have incompatible or invalid shapes."""


class DomainError(ValueError):
    """Input value outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """Malformed configuration or taxonomy input."""


class LabelError(ValueError):
    """A semantic mask contains a label absent from the taxonomy."""

    def __init__(self, label_id: int, pixel: tuple[int, int]):
        self.label_id = label_id
        self.pixel = pixel
        super().__init__(f"unknown label {label_id} at pixel (row={pixel[0]}, col={pixel[1]})")


class InsufficientClassesError(ValueError):
    """Fewer than two distinct labels in a descriptor batch."""


class UndefinedAPError(ValueError):
    """Average precision is undefined (no positive candidates)."""


class InsufficientMatchesError(ValueError):
    """Too few matches for geometric model estimation."""


class DegenerateGeometryError(ValueError):
    """Geometry estimation failed on degenerate input."""


class NonFiniteGradientError(RuntimeError):
    """A gradient buffer contains NaN or infinity."""

    def __init__(self, tensor_name: str):
        self.tensor_name = tensor_name
        super().__init__(f"non-finite gradient in tensor '{tensor_name}'")


class FileFormatError(ValueError):
    """A binary or text artifact file is corrupted or has a bad magic/length."""
