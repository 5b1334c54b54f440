"""gsf-exporter: frozen speech-encoder features to GSF1 files."""

from .encoders import EncoderInfo, HFEncoder, ToyEncoder, load_encoder
from .errors import AudioError, EncoderError, ExportError, ManifestError
from .exporting import ExportManifest, ExportResult, export
from .gsf import write_records

__version__ = "0.1.0"
