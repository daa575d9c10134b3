"""Exception taxonomy shared across the package.

Every imagedx-specific error derives from :class:`ImagedxError` so callers
can catch the whole family at pipeline boundaries (CLI, HTTP handlers).
"""


class ImagedxError(Exception):
    """Base class for all imagedx errors."""


# --- labels ---------------------------------------------------------------

class MalformedLabel(ImagedxError):
    """Label string violates the dot-delimited four-token grammar."""


class UnknownLabel(ImagedxError):
    """Label is well-formed but not part of the 25-entry catalog."""


# --- dataset / preprocessing ----------------------------------------------

class MissingSplitDirectory(ImagedxError):
    """Dataset root lacks the required train/ or val/ subdirectory."""


class EmptyDataset(ImagedxError):
    """No samples found where at least one was required."""


class DecodeError(ImagedxError):
    """Image bytes could not be decoded."""


class UnsupportedChannelCount(ImagedxError):
    """Decoded image has a channel layout the preprocessor does not accept."""


# --- model ------------------------------------------------------------------

class ConfigError(ImagedxError):
    """Inconsistent or invalid model/training configuration."""


class DomainError(ImagedxError):
    """Argument outside the mathematical domain of an operation."""


class ShapeMismatch(ImagedxError):
    """Tensor shapes are incompatible with the operation."""


class ArtifactError(ImagedxError):
    """Model artifact is missing, corrupt, or fails its integrity hash."""


class KernelBackendError(ImagedxError):
    """Requested compute-kernel backend is unavailable."""


# --- training / evaluation --------------------------------------------------

class NonFiniteLoss(ImagedxError):
    """Training loss became NaN/Inf; aborting instead of skipping batches."""


class LengthMismatch(ImagedxError):
    """Paired sequences differ in length."""


class EmptyMatrix(ImagedxError):
    """Confusion matrix contains no samples."""


# --- llm gateway --------------------------------------------------------------

class GatewayError(ImagedxError):
    """Base class for LLM gateway failures."""


class MissingCredential(GatewayError):
    """Remote backend selected but no API key present in the environment."""


class Timeout(GatewayError):
    """Request exceeded the configured timeout (retries exhausted)."""


class RateLimited(GatewayError):
    """Remote endpoint kept returning 429 until retries were exhausted."""


class RemoteError(GatewayError):
    """Remote endpoint returned a non-retryable error or kept failing."""


class EmptyCompletion(GatewayError):
    """Remote endpoint answered successfully but with empty text."""


# --- report store -------------------------------------------------------------

class DiskError(ImagedxError):
    """Durable write failed."""


class NotFound(ImagedxError):
    """No stored report under the requested id."""
