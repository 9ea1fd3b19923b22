"""Network building blocks shared by the encoder and the decoders."""

from __future__ import annotations

import math

import torch
import torch.nn as nn


class ChannelNorm(nn.Module):
    """LayerNorm over the channel dimension of NCHW tensors."""

    def __init__(self, channels: int, eps: float = 1e-6, affine: bool = True):
        super().__init__()
        if affine:
            self.weight = nn.Parameter(torch.ones(channels))
            self.bias = nn.Parameter(torch.zeros(channels))
        else:
            self.weight = None
            self.bias = None
        self.eps = eps

    def forward(self, x):
        mu = x.mean(dim=1, keepdim=True)
        var = x.var(dim=1, keepdim=True, unbiased=False)
        x = (x - mu) / torch.sqrt(var + self.eps)
        if self.weight is not None:
            x = x * self.weight[:, None, None] + self.bias[:, None, None]
        return x


class ConvNeXtStage(nn.Module):
    """Strided downsampling convolution followed by one ConvNeXt block:
    depthwise spatial conv, channel norm, pointwise expand-contract with
    GELU, residual add.

    With ``bias=False`` the stage is offset-free: scaling the input scales
    the features, and the stage cannot produce input-independent output.
    """

    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        stride: int,
        expansion: int = 4,
        bias: bool = True,
    ):
        super().__init__()
        self.down = nn.Conv2d(in_ch, out_ch, kernel_size=stride, stride=stride, bias=bias)
        self.dwconv = nn.Conv2d(out_ch, out_ch, 7, padding=3, groups=out_ch, bias=bias)
        self.norm = ChannelNorm(out_ch, affine=bias)
        self.pw1 = nn.Conv2d(out_ch, expansion * out_ch, 1, bias=bias)
        self.act = nn.GELU()
        self.pw2 = nn.Conv2d(expansion * out_ch, out_ch, 1, bias=bias)

    def forward(self, x):
        x = self.down(x)
        y = self.pw2(self.act(self.pw1(self.norm(self.dwconv(x)))))
        return x + y


class UpsampleBlock(nn.Module):
    """Convolution producing out_ch*s^2 channels, sub-pixel rearrangement
    by s, then GELU. The shared stage of the NeRV/HNeRV decoder lineage."""

    def __init__(self, in_ch: int, out_ch: int, stride: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch * stride * stride, 3, padding=1)
        self.shuffle = nn.PixelShuffle(stride)
        self.act = nn.GELU()

    def forward(self, x):
        return self.act(self.shuffle(self.conv(x)))


def _fan_in(module: nn.Module) -> int:
    if isinstance(module, nn.Linear):
        return module.in_features
    if isinstance(module, nn.Conv2d):
        kh, kw = module.kernel_size
        return (module.in_channels // module.groups) * kh * kw
    raise TypeError(f"no fan-in rule for {type(module).__name__}")


def init_parameters(model: nn.Module, seed: int) -> None:
    """Seeded fan-in-scaled uniform init for every conv/linear layer.

    Layers flagged with ``is_output_head`` are zeroed instead, so an
    untrained or re-initialized decoder contributes nothing to the
    reconstruction sum.
    """
    gen = torch.Generator().manual_seed(seed)
    for m in model.modules():
        if isinstance(m, (nn.Linear, nn.Conv2d)):
            if getattr(m, "is_output_head", False):
                with torch.no_grad():
                    m.weight.zero_()
                    if m.bias is not None:
                        m.bias.zero_()
                continue
            bound = 1.0 / math.sqrt(_fan_in(m))
            with torch.no_grad():
                m.weight.uniform_(-bound, bound, generator=gen)
                if m.bias is not None:
                    m.bias.uniform_(-bound, bound, generator=gen)


def make_output_head(in_ch: int, out_ch: int = 3) -> nn.Conv2d:
    head = nn.Conv2d(in_ch, out_ch, 3, padding=1)
    head.is_output_head = True
    return head
