"""Twin-encoder sentence, phrase and word representations."""

from .encoder import Encoder, EncoderConfig
from .model import FeatureMode, Pooling, Task, TwinModel
from .vocab import Vocabulary, build_vocab

__all__ = [
    "Encoder",
    "EncoderConfig",
    "FeatureMode",
    "Pooling",
    "Task",
    "TwinModel",
    "Vocabulary",
    "build_vocab",
]

__version__ = "0.1.0"
