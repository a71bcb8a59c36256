"""Exception types shared across the library."""


class TensorIOError(Exception):
    """Base class for tensor container file problems."""


class HeaderError(TensorIOError):
    """Magic bytes, version, or header dict are malformed."""


class UnsupportedDTypeError(TensorIOError):
    """File declares an element type other than little-endian float32/float64."""


class TruncatedPayloadError(TensorIOError):
    """Payload holds fewer bytes than the header's shape requires."""


class EmptySelectionError(Exception):
    """Every pooled sample fell below the filtering threshold alpha."""


class DegenerateRepresentationError(Exception):
    """Self-HSIC of a representation is (numerically) zero, e.g. constant features."""


class ManifestError(Exception):
    """Batch manifest is semantically invalid (missing keys, inconsistent shapes)."""
