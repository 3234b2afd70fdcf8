"""Dual translation generators and patch discriminators.

Each generator is encoder -> channel-mixing bottleneck -> decoder. The
bottleneck is a single 1x1 layer holding a square C x C weight matrix; it is
the one place style information is concentrated and the target of all
inference-time edits, so its forward pass accepts an optional weight override
that leaves the stored parameters untouched.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
import torch.nn.functional as F


@dataclass
class NetConfig:
    in_channels: int = 3
    base_channels: int = 32
    n_down: int = 2  # strided downsampling stages
    n_res: int = 4  # residual blocks on each side of the bottleneck
    latent_channels: int | None = None  # defaults to base_channels * 2**n_down
    mask_channels: int = 1
    image_px: int = 256
    d_base_channels: int = 64

    def __post_init__(self):
        if self.latent_channels is None:
            self.latent_channels = self.base_channels * 2**self.n_down
        for name in ("in_channels", "base_channels", "n_down", "n_res", "latent_channels", "mask_channels", "image_px"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.image_px % 2**self.n_down != 0:
            raise ValueError("image_px must be divisible by 2**n_down")

    @property
    def feature_px(self) -> int:
        return self.image_px // 2**self.n_down

    def encoder_channels(self) -> list[int]:
        # Stem output, then one entry per strided stage; the final stage lands
        # on latent_channels so the bottleneck width can be overridden freely.
        chans = [self.base_channels * 2**i for i in range(self.n_down)]
        return chans + [self.latent_channels]


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.block(x)


class Encoder(nn.Module):
    """Conv stem over image+mask channels, strided stages, residual blocks."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        chans = cfg.encoder_channels()
        layers: list[nn.Module] = [
            nn.Conv2d(cfg.in_channels + cfg.mask_channels, chans[0], 7, padding=3, padding_mode="reflect"),
            nn.InstanceNorm2d(chans[0]),
            nn.ReLU(inplace=True),
        ]
        for c_in, c_out in zip(chans[:-1], chans[1:]):
            layers += [
                nn.Conv2d(c_in, c_out, 3, stride=2, padding=1),
                nn.InstanceNorm2d(c_out),
                nn.ReLU(inplace=True),
            ]
        layers += [ResidualBlock(chans[-1]) for _ in range(cfg.n_res)]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class Decoder(nn.Module):
    def __init__(self, cfg: NetConfig):
        super().__init__()
        chans = cfg.encoder_channels()[::-1]  # latent first, stem width last
        layers: list[nn.Module] = [ResidualBlock(chans[0]) for _ in range(cfg.n_res)]
        for c_in, c_out in zip(chans[:-1], chans[1:]):
            layers += [
                nn.ConvTranspose2d(c_in, c_out, 3, stride=2, padding=1, output_padding=1),
                nn.InstanceNorm2d(c_out),
                nn.ReLU(inplace=True),
            ]
        layers += [
            nn.Conv2d(chans[-1], cfg.in_channels, 7, padding=3, padding_mode="reflect"),
            nn.Sigmoid(),  # outputs stay inside the unit LAB encoding range
        ]
        self.net = nn.Sequential(*layers)

    def forward(self, f):
        return self.net(f)


class ChannelMixer(nn.Module):
    """1x1 bottleneck layer: out[:, y, x] = M @ f[:, y, x] + bias.

    M is the stored square weight unless an override matrix is supplied; both
    paths run through the same conv so an override equal to the stored weight
    reproduces the unmodified output bit for bit.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.weight = nn.Parameter(torch.empty(channels, channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        nn.init.kaiming_uniform_(self.weight, a=5**0.5)

    def forward(self, f: torch.Tensor, w_override: torch.Tensor | None = None) -> torch.Tensor:
        if f.shape[1] != self.channels:
            raise ValueError(f"feature map has {f.shape[1]} channels, layer expects {self.channels}")
        m = self.weight if w_override is None else w_override
        if m.shape != (self.channels, self.channels):
            raise ValueError(f"override must be {self.channels}x{self.channels}, got {tuple(m.shape)}")
        m = m.to(dtype=f.dtype, device=f.device)
        return F.conv2d(f, m.view(self.channels, self.channels, 1, 1), self.bias.to(f.dtype))


class Generator(nn.Module):
    """One translation direction: encode, mix channels, decode."""

    def __init__(self, cfg: NetConfig, direction: str):
        super().__init__()
        if direction not in ("he2p63", "p632he"):
            raise ValueError(f"unknown direction {direction!r}")
        self.cfg = cfg
        self.direction = direction
        self.encoder = Encoder(cfg)
        self.mixer = ChannelMixer(cfg.latent_channels)
        self.decoder = Decoder(cfg)

    def _with_mask(self, image: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
        b, c, h, w = image.shape
        if c != self.cfg.in_channels:
            raise ValueError(f"expected {self.cfg.in_channels}-channel images, got {c}")
        if h != self.cfg.image_px or w != self.cfg.image_px:
            raise ValueError(f"expected {self.cfg.image_px}px images, got {h}x{w}")
        if mask is None:
            mask = image.new_ones(b, self.cfg.mask_channels, h, w)
        else:
            if mask.ndim == 2:
                mask = mask[None, None]
            mask = mask.to(dtype=image.dtype, device=image.device)
            if mask.shape[-2:] != (h, w):
                mask = F.interpolate(mask, size=(h, w), mode="nearest")
            if mask.shape[0] == 1 and b > 1:
                mask = mask.expand(b, *mask.shape[1:])
        return torch.cat([image, mask], dim=1)

    def encode(self, image: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        return self.encoder(self._with_mask(image, mask))

    def decode(self, f: torch.Tensor) -> torch.Tensor:
        return self.decoder(f)

    def generate(
        self,
        image: torch.Tensor,
        mask: torch.Tensor | None = None,
        w_override: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Full forward pass; returns (output, encoder features, mixed features)."""
        f_pre = self.encode(image, mask)
        f_post = self.mixer(f_pre, w_override)
        return self.decode(f_post), f_pre, f_post

    def forward(self, image, mask=None, w_override=None):
        return self.generate(image, mask, w_override)[0]


class Discriminator(nn.Module):
    """Patch classifier emitting an s x s grid of realism scores."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        c = cfg.d_base_channels
        self.net = nn.Sequential(
            nn.Conv2d(cfg.in_channels, c, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c, c * 2, 4, stride=2, padding=1),
            nn.InstanceNorm2d(c * 2),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c * 2, c * 4, 4, stride=2, padding=1),
            nn.InstanceNorm2d(c * 4),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c * 4, c * 8, 4, stride=1, padding=1),
            nn.InstanceNorm2d(c * 8),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c * 8, 1, 4, stride=1, padding=1),
        )

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.net(image)


def saliency_map(d: Discriminator, image: torch.Tensor) -> torch.Tensor:
    """Input-gradient saliency of the mean discriminator score.

    Returns |d mean(D(x)) / dx| normalized per sample by its maximum, so values
    lie in [0, 1]; a sample whose gradient vanishes yields an all-zero map.
    """
    x = image.detach().requires_grad_(True)
    score = d(x).mean()
    (grad,) = torch.autograd.grad(score, x)
    sal = grad.abs()
    peak = sal.amax(dim=(1, 2, 3), keepdim=True)
    return torch.where(peak > 0, sal / peak.clamp_min(torch.finfo(sal.dtype).tiny), torch.zeros_like(sal))


def build_generators(cfg: NetConfig) -> tuple[Generator, Generator]:
    return Generator(cfg, "he2p63"), Generator(cfg, "p632he")


def build_discriminators(cfg: NetConfig) -> tuple[Discriminator, Discriminator]:
    # One per target domain: d_he judges H&E-looking tiles, d_p63 judges P63.
    return Discriminator(cfg), Discriminator(cfg)
