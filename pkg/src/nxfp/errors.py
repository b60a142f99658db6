"""Exception hierarchy shared by all nxfp modules."""


class NxfpError(Exception):
    """Base class for all library errors."""


class UsageError(NxfpError):
    """Bad CLI arguments or unparseable format spec."""


class FormatSpecError(UsageError):
    """A format spec string ("mxfp4", "nxfp5", ...) could not be parsed."""


class NumericInputError(NxfpError):
    """Input tensor contains NaN/Inf, is empty, or is out of codec range."""


class ZeroBlockError(NxfpError):
    """An all-zero block has no shared exponent (reserved encoding)."""


class IngestError(NxfpError):
    """Base class for tensor loading errors."""


class MalformedFileError(IngestError):
    """File header or structure does not match the declared format."""


class DtypeMismatchError(IngestError):
    """Stored dtype is not one of the supported dtypes."""


class TruncatedDataError(IngestError):
    """File ends before the declared data region."""


class UnknownTensorError(IngestError):
    """Requested tensor name not present in a multi-tensor file."""


class ContainerError(NxfpError):
    """Base class for .nxt container errors."""


class BadMagicError(ContainerError):
    """Stream does not start with the NXT1 magic."""


class UnsupportedVersionError(ContainerError):
    """Container version not understood by this build."""


class TruncatedStreamError(ContainerError):
    """Stream ends inside a declared section."""


class HeaderError(ContainerError):
    """Container header is malformed or inconsistent."""


class LengthMismatchError(ContainerError):
    """Section sizes disagree with the header (including trailing bytes)."""
