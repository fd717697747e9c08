"""Real-time listening-behavior pipeline.

Converts a speaker's audio and facial-motion streams into a listening
agent's ARKit facial behavior: feature extraction, timestamp-synchronized
fusion, quantized autoregressive prediction, blendshape retargeting, and
paced frame streaming, with per-stage latency instrumentation throughout.
"""

__version__ = "0.1.0"

from .arkit import ARKIT_BLENDSHAPE_NAMES, NUM_BLENDSHAPES
from .clock import now_us
from .config import PipelineConfig, load_config, save_config
from .envelope import PayloadKind, TimedEnvelope, decode_envelope
from .frames import ArkitFrame, FlameFrame, MelFrame

__all__ = [
    "ARKIT_BLENDSHAPE_NAMES",
    "NUM_BLENDSHAPES",
    "now_us",
    "PipelineConfig",
    "load_config",
    "save_config",
    "PayloadKind",
    "TimedEnvelope",
    "decode_envelope",
    "ArkitFrame",
    "FlameFrame",
    "MelFrame",
    "__version__",
]
