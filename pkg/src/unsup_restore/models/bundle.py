"""Model bundle: the three modules, their config, and checkpoint I/O."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import torch

from .analysis import AnalysisUNet
from .channel import ChannelUNet
from .synthesis import ExternalVocoder, ReferenceVocoder, ToyVocoder, freeze

BUNDLE_VERSION = 1
VOCODER_KINDS = ("toy-neural", "reference", "external")


class BundleError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    levels: int = 4
    analysis_width: int = 64
    analysis_blocks: int = 4
    channel_width: int = 32
    channel_blocks: int = 4
    channel_dim: int = 128
    vocoder: str = "toy-neural"
    vocoder_hidden: int = 128
    vocoder_checkpoint: str | None = None

    def __post_init__(self):
        for f in ("levels", "analysis_width", "analysis_blocks", "channel_width", "channel_blocks",
                  "channel_dim", "vocoder_hidden"):
            if getattr(self, f) < 1:
                raise ValueError(f"model.{f} must be >= 1, got {getattr(self, f)}")
        if self.vocoder not in VOCODER_KINDS:
            raise ValueError(f"model.vocoder must be one of {VOCODER_KINDS}, got {self.vocoder!r}")

    def fingerprint(self) -> str:
        # the vocoder choice is an inference-time switch, not part of the trained architecture
        arch = {k: v for k, v in asdict(self).items() if k not in ("vocoder", "vocoder_checkpoint")}
        return hashlib.sha256(json.dumps(arch, sort_keys=True).encode()).hexdigest()[:16]


def build_vocoder(kind: str, cfg: ModelConfig, checkpoint=None):
    if kind == "toy-neural":
        return ToyVocoder(cfg.vocoder_hidden)
    if kind == "reference":
        return ReferenceVocoder()
    if kind == "external":
        path = checkpoint or cfg.vocoder_checkpoint
        if not path:
            raise BundleError("the external vocoder needs a checkpoint path")
        return ExternalVocoder(path)
    raise BundleError(f"unknown vocoder kind {kind!r}")


@dataclass
class ModelBundle:
    config: ModelConfig
    analysis: AnalysisUNet
    channel: ChannelUNet
    synthesis: ToyVocoder
    synthesis_frozen: bool = True
    version: int = BUNDLE_VERSION

    @classmethod
    def create(cls, config: ModelConfig = ModelConfig(), seed: int = 0) -> "ModelBundle":
        torch.manual_seed(seed)
        analysis = AnalysisUNet(base_width=config.analysis_width, levels=config.levels,
                                n_blocks=config.analysis_blocks, channel_dim=config.channel_dim)
        channel = ChannelUNet(base_width=config.channel_width, levels=config.levels,
                              n_blocks=config.channel_blocks, channel_dim=config.channel_dim)
        synthesis = freeze(ToyVocoder(config.vocoder_hidden))
        return cls(config, analysis, channel, synthesis)

    @property
    def config_fingerprint(self) -> str:
        return self.config.fingerprint()

    def trainable_parameters(self):
        return list(self.analysis.parameters()) + list(self.channel.parameters())

    def freeze_synthesis(self) -> None:
        freeze(self.synthesis)
        self.synthesis_frozen = True

    def train(self) -> None:
        self.analysis.train()
        self.channel.train()
        self.synthesis.eval()

    def eval(self) -> None:
        self.analysis.eval()
        self.channel.eval()
        self.synthesis.eval()

    def state(self) -> dict:
        return {
            "version": self.version,
            "config": asdict(self.config),
            "config_fingerprint": self.config_fingerprint,
            "synthesis_frozen": self.synthesis_frozen,
            "analysis": self.analysis.state_dict(),
            "channel": self.channel.state_dict(),
            "synthesis": self.synthesis.state_dict(),
        }


def parameter_checksum(module: torch.nn.Module) -> str:
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def save_bundle(bundle: ModelBundle, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(bundle.state(), tmp)
    tmp.replace(path)
    return path


def load_bundle(path, expected: ModelConfig | None = None) -> ModelBundle:
    """Load a checkpoint written by :func:`save_bundle`.

    Raises :class:`BundleError` for unreadable files, versions newer than this
    code understands, and when the stored architecture fingerprint does not
    match ``expected`` (or the stored config itself).
    """
    try:
        state = torch.load(str(path), map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise BundleError(f"corrupt or unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(state, dict) or "version" not in state:
        raise BundleError(f"{path} is not a model bundle")
    if state["version"] > BUNDLE_VERSION:
        raise BundleError(f"{path} has bundle version {state['version']}; "
                          f"this build supports up to {BUNDLE_VERSION}")
    known = {f.name for f in fields(ModelConfig)}
    stored = ModelConfig(**{k: v for k, v in state["config"].items() if k in known})
    if stored.fingerprint() != state["config_fingerprint"]:
        raise BundleError(f"{path}: stored config does not match its fingerprint")
    if expected is not None and expected.fingerprint() != state["config_fingerprint"]:
        raise BundleError(f"{path}: config fingerprint mismatch "
                          f"(checkpoint {state['config_fingerprint']}, active config {expected.fingerprint()})")
    config = expected if expected is not None else stored
    bundle = ModelBundle.create(config)
    bundle.analysis.load_state_dict(state["analysis"])
    bundle.channel.load_state_dict(state["channel"])
    bundle.synthesis.load_state_dict(state["synthesis"])
    bundle.synthesis_frozen = bool(state["synthesis_frozen"])
    if bundle.synthesis_frozen:
        freeze(bundle.synthesis)
    bundle.eval()
    return bundle
