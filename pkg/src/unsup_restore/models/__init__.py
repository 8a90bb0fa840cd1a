from .analysis import AnalysisOutput, AnalysisUNet
from .bundle import (BundleError, ModelBundle, ModelConfig, build_vocoder, load_bundle,
                     parameter_checksum, save_bundle)
from .channel import ChannelUNet
from .synthesis import ExternalVocoder, ReferenceVocoder, ToyVocoder, VocoderError

__all__ = [
    "AnalysisOutput", "AnalysisUNet", "BundleError", "ChannelUNet", "ExternalVocoder", "ModelBundle",
    "ModelConfig", "ReferenceVocoder", "ToyVocoder", "VocoderError", "build_vocoder", "load_bundle",
    "parameter_checksum", "save_bundle",
]
