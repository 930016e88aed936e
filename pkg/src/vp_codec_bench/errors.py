"""Exception hierarchy with exit codes."""

from __future__ import annotations

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2
EXIT_FAILURE = 3


class VpcbError(Exception):
    """Base exception for vp-codec-bench."""

    exit_code: int = EXIT_FAILURE

    def __init__(self, message: str, exit_code: int | None = None):
        super().__init__(message)
        if exit_code is not None:
            self.exit_code = exit_code


class UsageError(VpcbError):
    """Invalid CLI arguments."""

    exit_code = EXIT_USAGE


class ManifestError(VpcbError):
    """Experiment manifest is missing, malformed or inconsistent."""

    exit_code = EXIT_USAGE


class Y4MParseError(VpcbError):
    """Malformed YUV4MPEG2 stream header."""


class TruncationError(VpcbError):
    """Frame payload ended early."""

    def __init__(self, message: str, frame_index: int):
        super().__init__(message)
        self.frame_index = frame_index


class UnsupportedFormatError(VpcbError):
    """Colorspace, chroma layout or bit depth not handled."""


class DimensionError(VpcbError):
    """Frame geometry does not match the expected spec."""


class GeometryError(VpcbError):
    """Marker or ROI geometry does not fit the frame."""


class EncodeError(VpcbError):
    """Encoder or decoder backend failed."""

    def __init__(self, message: str, diagnostics: str = ""):
        super().__init__(message)
        self.diagnostics = diagnostics


class UnsupportedDepthError(VpcbError):
    """Bit depth not supported by the codec."""


class RangeError(VpcbError):
    """Rate parameter or score outside its declared range."""


class ClipUnreachableError(VpcbError):
    """No ladder exists above the quality floor for this clip."""


class FrameUnreadableError(VpcbError):
    """Fewer than two marker corners agreed on a payload."""

    def __init__(self, message: str, diagnostics: dict[str, str] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class AlignmentImpossibleError(VpcbError):
    """No readable marker in the capture."""


class WrongClipError(VpcbError):
    """Capture carries markers of a different clip."""


class GenlockViolationError(VpcbError):
    """Duplicate or skipped frames under the strict pairing policy."""

    def __init__(self, message: str, events: list | None = None):
        super().__init__(message)
        self.events = events or []


class RunnerError(VpcbError):
    """External metric runner failed."""

    def __init__(self, message: str, stderr: str = ""):
        super().__init__(message)
        self.stderr = stderr


class MetricParseError(VpcbError):
    """Metric runner output is not the expected JSON."""


class EmptyInputError(VpcbError):
    """Operation needs at least one input element."""


class ConsistencyError(VpcbError):
    """Inputs disagree (mixed metrics, illegal role transition, ...)."""


class ReportWriteError(VpcbError):
    """Report output could not be written."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path
