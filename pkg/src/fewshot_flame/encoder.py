"""Convolutional encoders mapping images to embedding vectors."""
from __future__ import annotations

import contextlib
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigurationError

ARCHITECTURES = ("small-conv", "vgg16-conv")
_DEFAULT_DIM = {"small-conv": 256, "vgg16-conv": 2048}


@dataclass(frozen=True)
class EncoderConfig:
    architecture: str = "small-conv"
    embedding_dim: int | None = None
    pretrained: bool = False
    input_size: int = 84
    channels: int = 32  # small-conv only

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigurationError(f"unknown architecture {self.architecture!r}; "
                                     f"expected one of {ARCHITECTURES}")
        if self.embedding_dim is None:
            object.__setattr__(self, "embedding_dim", _DEFAULT_DIM[self.architecture])
        if self.embedding_dim <= 0:
            raise ConfigurationError("embedding_dim must be positive")
        if self.pretrained and self.architecture != "vgg16-conv":
            raise ConfigurationError("pretrained weights exist only for vgg16-conv")

    def to_dict(self) -> dict:
        return asdict(self)


def _conv_block(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(nn.Conv2d(cin, cout, 3, padding=1), nn.BatchNorm2d(cout),
                         nn.ReLU(), nn.MaxPool2d(2))


def _vgg16_features(pretrained: bool) -> nn.Module:
    from torchvision.models import VGG16_Weights, vgg16

    weights = VGG16_Weights.IMAGENET1K_V1 if pretrained else None
    return vgg16(weights=weights).features


class Encoder(nn.Module):
    """Conv stack, flatten, then one linear projection to ``embedding_dim``.

    Takes NCHW float tensors; use :func:`encode` for (N, H, W, 3) arrays.
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        if cfg.architecture == "small-conv":
            c = cfg.channels
            self.features = nn.Sequential(_conv_block(3, c), _conv_block(c, c),
                                          _conv_block(c, c), _conv_block(c, c))
        else:
            self.features = _vgg16_features(cfg.pretrained)
        with torch.no_grad():
            n_flat = self.features(torch.zeros(1, 3, cfg.input_size, cfg.input_size)).numel()
        if n_flat == 0:
            raise ConfigurationError(f"input_size {cfg.input_size} too small for {cfg.architecture}")
        self.projection = nn.Linear(n_flat, cfg.embedding_dim)

    @property
    def embedding_dim(self) -> int:
        return self.cfg.embedding_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.projection(torch.flatten(self.features(x), 1))


def build_encoder(cfg: EncoderConfig = EncoderConfig(), seed: int = 0) -> Encoder:
    """Construct an encoder whose random initialisation depends only on ``seed``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        enc = Encoder(cfg)
    enc.seed = seed
    return enc


def as_float_tensor(x) -> torch.Tensor:
    """Tensors pass through; anything else becomes float64."""
    if isinstance(x, torch.Tensor):
        return x if x.is_floating_point() else x.double()
    return torch.from_numpy(np.asarray(x, dtype=np.float64))


def images_to_tensor(images, input_size: int, dtype=None) -> torch.Tensor:
    """Convert an (N, H, W, 3) batch (array or tensor) to an NCHW tensor."""
    t = images if isinstance(images, torch.Tensor) else torch.from_numpy(np.ascontiguousarray(images))
    if t.ndim == 3:
        t = t[None]
    if t.ndim != 4 or t.shape[1:] != (input_size, input_size, 3):
        raise ValueError(f"expected images of shape (N, {input_size}, {input_size}, 3), "
                         f"got {tuple(t.shape)}")
    t = t.permute(0, 3, 1, 2)
    return t.to(dtype or torch.get_default_dtype()).contiguous()


def encode(encoder: Encoder, images) -> torch.Tensor:
    """Embed a batch of (N, input_size, input_size, 3) images, order preserved.

    Gradients flow when the encoder is in training mode and grad is enabled;
    the caller decides (wrap in ``torch.no_grad()`` for inference).
    """
    dtype = next(encoder.parameters()).dtype
    return encoder(images_to_tensor(images, encoder.cfg.input_size, dtype))


@contextlib.contextmanager
def inference(module: nn.Module):
    """Eval mode without autograd; restores the previous training flag."""
    was_training = module.training
    module.eval()
    try:
        with torch.no_grad():
            yield module
    finally:
        module.train(was_training)
