"""14-layer 3D convolutional autoencoder.

Encoder: three stride-2 4x4x4 convolutions (each with a trilinear
downsampling skip on the first S channels) interleaved with
channel-preserving double 3x3x3 blocks carrying identity skips, then two
fully connected bottleneck layers. Decoder mirrors with single 3x3x3
blocks and stride-2 transposed convolutions plus trilinear upsampling
skips. A leaky rectifier follows every convolution and fully connected
layer; the additive skips bypass both the convolution and the rectifier.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .config import AEConfig


def _interp_skip(x: torch.Tensor, n_ch: int, scale: float) -> torch.Tensor:
    return F.interpolate(
        x[:, :n_ch], scale_factor=scale, mode="trilinear", align_corners=False
    )


def _pad_channels(x: torch.Tensor, out_channels: int) -> torch.Tensor:
    return F.pad(x, (0, 0, 0, 0, 0, 0, 0, out_channels - x.shape[1]))


class DownBlock(nn.Module):
    """4x4x4 stride-2 convolution with a downsampling interpolation skip."""

    def __init__(self, cin, cout, skip_ch, slope):
        super().__init__()
        self.conv = nn.Conv3d(cin, cout, kernel_size=4, stride=2, padding=1)
        self.act = nn.LeakyReLU(slope)
        self.skip_ch = min(skip_ch, cin, cout)

    def forward(self, x):
        y = self.act(self.conv(x))
        skip = _interp_skip(x, self.skip_ch, 0.5)
        return y + _pad_channels(skip, y.shape[1])


class UpBlock(nn.Module):
    """4x4x4 stride-2 transposed convolution with an upsampling skip."""

    def __init__(self, cin, cout, skip_ch, slope):
        super().__init__()
        self.conv = nn.ConvTranspose3d(cin, cout, kernel_size=4, stride=2, padding=1)
        self.act = nn.LeakyReLU(slope)
        self.skip_ch = min(skip_ch, cin, cout)

    def forward(self, x):
        y = self.act(self.conv(x))
        skip = _interp_skip(x, self.skip_ch, 2.0)
        return y + _pad_channels(skip, y.shape[1])


class ConvBlock(nn.Module):
    """One or two channel-preserving 3x3x3 convolutions with identity skip."""

    def __init__(self, width, slope, double: bool):
        super().__init__()
        layers = [nn.Conv3d(width, width, 3, padding=1), nn.LeakyReLU(slope)]
        if double:
            layers += [nn.Conv3d(width, width, 3, padding=1), nn.LeakyReLU(slope)]
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        return x + self.body(x)


class ConvAutoencoder3D(nn.Module):
    def __init__(self, cfg: AEConfig):
        super().__init__()
        self.cfg = cfg
        s = cfg.channels
        w1, w2, w3 = cfg.stage_widths
        slope = cfg.leaky_slope
        gx, gy, gz = (d // 8 for d in cfg.dims)
        self.inner_shape = (w3, gx, gy, gz)
        flat = w3 * gx * gy * gz

        self.encoder = nn.Sequential(
            DownBlock(s, w1, s, slope),
            ConvBlock(w1, slope, double=True),
            DownBlock(w1, w2, s, slope),
            ConvBlock(w2, slope, double=True),
            DownBlock(w2, w3, s, slope),
            ConvBlock(w3, slope, double=True),
        )
        self.fc_in = nn.Linear(flat, cfg.bottleneck)
        self.fc_out = nn.Linear(cfg.bottleneck, flat)
        self.act = nn.LeakyReLU(slope)
        self.decoder = nn.Sequential(
            ConvBlock(w3, slope, double=False),
            UpBlock(w3, w2, s, slope),
            ConvBlock(w2, slope, double=False),
            UpBlock(w2, w1, s, slope),
            ConvBlock(w1, slope, double=False),
            UpBlock(w1, s, s, slope),
        )

    def forward(self, x):
        h = self.encoder(x)
        code = self.act(self.fc_in(h.flatten(1)))
        h = self.act(self.fc_out(code)).reshape(-1, *self.inner_shape)
        return self.decoder(h)


def build_model(cfg: AEConfig) -> ConvAutoencoder3D:
    torch.manual_seed(cfg.seed)
    return ConvAutoencoder3D(cfg).to(cfg.device)


def layer_shapes(cfg: AEConfig) -> list[tuple]:
    """Output shape of each of the 14 layers, (channels, x, y, z) or
    ('flat', width) for the bottleneck pair."""
    s = cfg.channels
    w1, w2, w3 = cfg.stage_widths
    x, y, z = cfg.dims
    half = lambda d, k: (d // 2**k)
    shapes = [
        (w1, half(x, 1), half(y, 1), half(z, 1)),
        (w1, half(x, 1), half(y, 1), half(z, 1)),
        (w2, half(x, 2), half(y, 2), half(z, 2)),
        (w2, half(x, 2), half(y, 2), half(z, 2)),
        (w3, half(x, 3), half(y, 3), half(z, 3)),
        (w3, half(x, 3), half(y, 3), half(z, 3)),
        ("flat", cfg.bottleneck),
        (w3, half(x, 3), half(y, 3), half(z, 3)),
        (w3, half(x, 3), half(y, 3), half(z, 3)),
        (w2, half(x, 2), half(y, 2), half(z, 2)),
        (w2, half(x, 2), half(y, 2), half(z, 2)),
        (w1, half(x, 1), half(y, 1), half(z, 1)),
        (w1, half(x, 1), half(y, 1), half(z, 1)),
        (s, x, y, z),
    ]
    return shapes
