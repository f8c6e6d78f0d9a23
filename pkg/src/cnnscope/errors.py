"""Exception types shared across the package.

The CLI maps these onto its exit-code contract (2 usage, 3 I/O, 4 data),
so raising the right class matters more than the message wording.
"""


class CnnScopeError(Exception):
    """Base class for all errors raised by cnnscope."""


class NetSpecError(CnnScopeError):
    """Invalid architecture description (DSL or constructed NetSpec)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EngineError(CnnScopeError):
    """Weights/shapes inconsistent with the network during a forward pass."""


class SelectionError(CnnScopeError):
    """Layer/filter/neuron selection outside the network's extent."""


class PreconditionError(CnnScopeError):
    """Input data cannot support the requested computation."""


class WeightFormatError(CnnScopeError):
    """Malformed weight container file."""


class ImageFormatError(CnnScopeError):
    """Malformed or unsupported image file."""
