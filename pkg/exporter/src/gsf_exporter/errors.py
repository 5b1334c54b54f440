"""Exporter error types."""


class ExportError(Exception):
    """Base class for exporter failures."""


class ManifestError(ExportError):
    """The export manifest is malformed or references unknown labels."""


class AudioError(ExportError):
    """An audio file cannot be decoded (leads to a per-file skip)."""


class EncoderError(ExportError):
    """Encoder cannot be loaded or its layers do not match the request."""
