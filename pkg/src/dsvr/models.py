"""Model assembly: ConvNeXt encoder, upsampling decoders, the dual-stream
model and the index-only / hybrid baselines.

Decoder parameter counts have closed forms used by the budget solver; the
module constructors must realize exactly those counts (tested).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

from .blocks import ConvNeXtStage, UpsampleBlock, init_parameters, make_output_head
from .freqsplit import SpectralMask, build_mask, high_pass
from .posenc import PosEncConfig, encode, normalize_index, split

MIN_CHANNELS = 2


@dataclass(frozen=True)
class ArchConfig:
    """Shape parameters shared by encoder and decoders.

    ``strides`` multiply out to the spatial upsampling factor; their product
    times the embedding grid must equal the frame size.
    """

    embed_shape: tuple = (16, 2, 4)  # (c, h, w)
    strides: tuple = (4, 4, 2)
    reduction: float = 2.0
    enc_width: int = 32
    enc_expansion: int = 4

    @property
    def scale(self) -> int:
        return int(np.prod(self.strides))

    @property
    def frame_hw(self) -> tuple:
        c, h, w = self.embed_shape
        return (self.scale * h, self.scale * w)

    def validate_frame(self, height: int, width: int) -> None:
        if (height, width) != self.frame_hw:
            raise ValueError(
                f"frame {height}x{width} incompatible with strides "
                f"{self.strides} and embedding grid {self.embed_shape[1:]} "
                f"(expected {self.frame_hw[0]}x{self.frame_hw[1]})"
            )


def desk_arch() -> ArchConfig:
    return ArchConfig(embed_shape=(16, 2, 4), strides=(4, 4, 2), enc_width=32)


def paper_arch() -> ArchConfig:
    return ArchConfig(embed_shape=(16, 2, 4), strides=(5, 4, 4, 2, 2), enc_width=64)


def tiny_arch() -> ArchConfig:
    """16x32 frames; used by fast numeric checks."""
    return ArchConfig(embed_shape=(16, 2, 4), strides=(4, 2), enc_width=16)


def stage_widths(base_width: int, n_stages: int, reduction: float) -> list:
    """Per-stage channel widths decaying by ``reduction`` from base_width."""
    return [
        max(MIN_CHANNELS, int(round(base_width / reduction**i)))
        for i in range(n_stages)
    ]


class Encoder(nn.Module):
    """ConvNeXt downsampler mapping 3xHxW to the embedding grid c x h x w.

    Built entirely bias-free so embeddings track input content: shared
    structure between frames yields similar embeddings, and the encoder
    cannot pad them with input-independent offsets.
    """

    def __init__(self, arch: ArchConfig):
        super().__init__()
        c_embed = arch.embed_shape[0]
        stages = []
        in_ch = 3
        for s in arch.strides:
            stages.append(
                ConvNeXtStage(in_ch, arch.enc_width, s, arch.enc_expansion, bias=False)
            )
            in_ch = arch.enc_width
        self.stages = nn.Sequential(*stages)
        self.proj = nn.Conv2d(in_ch, c_embed, 1, bias=False)

    def forward(self, x):
        return self.proj(self.stages(x))


class ConvDecoder(nn.Module):
    """Upsampling decoder fed by an embedding grid (the hybrid pathway).

    One sub-pixel block per stride; ``widths`` gives the post-shuffle
    channel count of each stage.
    """

    def __init__(self, in_channels: int, widths: Sequence[int], strides: Sequence[int]):
        super().__init__()
        if len(widths) != len(strides):
            raise ValueError("need one width per stride")
        blocks = []
        prev = in_channels
        for w, s in zip(widths, strides):
            blocks.append(UpsampleBlock(prev, w, s))
            prev = w
        self.blocks = nn.Sequential(*blocks)
        self.head = make_output_head(prev)
        self.widths = tuple(widths)

    def forward(self, x):
        return self.head(self.blocks(x))


class MlpDecoder(nn.Module):
    """Index-driven decoder: MLP lifts the encoding to a seed grid, then
    sub-pixel blocks upsample to the frame."""

    def __init__(
        self,
        input_dim: int,
        mlp_hidden: int,
        widths: Sequence[int],
        strides: Sequence[int],
        grid_hw: tuple,
    ):
        super().__init__()
        if len(widths) != len(strides) + 1:
            raise ValueError("need len(strides)+1 widths (first is the seed grid)")
        self.grid_hw = tuple(grid_hw)
        self.seed_channels = widths[0]
        self.mlp = nn.Sequential(
            nn.Linear(input_dim, mlp_hidden),
            nn.GELU(),
            nn.Linear(mlp_hidden, widths[0] * grid_hw[0] * grid_hw[1]),
        )
        blocks = []
        prev = widths[0]
        for w, s in zip(widths[1:], strides):
            blocks.append(UpsampleBlock(prev, w, s))
            prev = w
        self.blocks = nn.Sequential(*blocks)
        self.head = make_output_head(prev)
        self.widths = tuple(widths)
        self.input_dim = input_dim
        self.mlp_hidden = mlp_hidden

    def forward(self, v):
        grid = self.mlp(v).reshape(
            v.shape[0], self.seed_channels, self.grid_hw[0], self.grid_hw[1]
        )
        return self.head(self.blocks(grid))


def conv_decoder_param_count(
    in_channels: int, widths: Sequence[int], strides: Sequence[int]
) -> int:
    total = 0
    prev = in_channels
    for w, s in zip(widths, strides):
        total += 9 * prev * w * s * s + w * s * s
        prev = w
    return total + 9 * prev * 3 + 3


def mlp_decoder_param_count(
    input_dim: int,
    mlp_hidden: int,
    widths: Sequence[int],
    strides: Sequence[int],
    grid_hw: tuple,
) -> int:
    grid = widths[0] * grid_hw[0] * grid_hw[1]
    total = input_dim * mlp_hidden + mlp_hidden + mlp_hidden * grid + grid
    prev = widths[0]
    for w, s in zip(widths[1:], strides):
        total += 9 * prev * w * s * s + w * s * s
        prev = w
    return total + 9 * prev * 3 + 3


def count_params(model: nn.Module) -> dict:
    """Exact trainable-parameter counts per named component plus total."""
    ledger = {}
    for name, child in model.named_children():
        ledger[name] = sum(p.numel() for p in child.parameters())
    ledger["total"] = sum(p.numel() for p in model.parameters())
    return ledger


class DualStreamModel(nn.Module):
    """High-frequency stream (encoder on high-passed frames -> conv decoder)
    plus two index-driven low-frequency decoders; outputs sum pixel-wise."""

    def __init__(
        self,
        arch: ArchConfig,
        posenc_cfg: PosEncConfig,
        keep_ratio: float,
        hfd_widths: Sequence[int],
        lfd1_widths: Sequence[int],
        lfd1_hidden: int,
        lfd2_widths: Sequence[int],
        lfd2_hidden: int,
        seed: int = 0,
    ):
        super().__init__()
        c, gh, gw = arch.embed_shape
        self.encoder = Encoder(arch)
        self.hfd = ConvDecoder(c, hfd_widths, arch.strides)
        self.lfd1 = MlpDecoder(
            posenc_cfg.low_length, lfd1_hidden, lfd1_widths, arch.strides, (gh, gw)
        )
        self.lfd2 = MlpDecoder(
            posenc_cfg.high_length, lfd2_hidden, lfd2_widths, arch.strides, (gh, gw)
        )
        self.arch = arch
        self.posenc_cfg = posenc_cfg
        self.keep_ratio = keep_ratio
        self._mask: Optional[SpectralMask] = None
        init_parameters(self, seed)

    method = "dual"

    def spectral_mask(self, height: int, width: int) -> SpectralMask:
        if self._mask is None or (self._mask.height, self._mask.width) != (
            height,
            width,
        ):
            self._mask = build_mask(height, width, self.keep_ratio)
        return self._mask

    def high_pass_frames(self, frames: np.ndarray) -> np.ndarray:
        mask = self.spectral_mask(frames.shape[-2], frames.shape[-1])
        return high_pass(frames, mask)

    def embed(self, hp_frames: torch.Tensor) -> torch.Tensor:
        return self.encoder(hp_frames)

    def decode(
        self,
        embeddings: torch.Tensor,
        gamma_low: torch.Tensor,
        gamma_high: torch.Tensor,
    ):
        """Returns (recon, hf_part, lf_part), all unclipped."""
        hf = self.hfd(embeddings)
        lf = self.lfd1(gamma_low) + self.lfd2(gamma_high)
        return hf + lf, hf, lf

    def lf_only(self, gamma_low: torch.Tensor, gamma_high: torch.Tensor):
        return self.lfd1(gamma_low) + self.lfd2(gamma_high)

    def transmitted_components(self) -> tuple:
        return ("hfd", "lfd1", "lfd2")


class NeRVModel(nn.Module):
    """Index-only baseline: the full positional encoding drives one decoder."""

    def __init__(
        self,
        arch: ArchConfig,
        posenc_cfg: PosEncConfig,
        widths: Sequence[int],
        mlp_hidden: int,
        seed: int = 0,
    ):
        super().__init__()
        _, gh, gw = arch.embed_shape
        self.decoder = MlpDecoder(
            posenc_cfg.encoded_length, mlp_hidden, widths, arch.strides, (gh, gw)
        )
        self.arch = arch
        self.posenc_cfg = posenc_cfg
        init_parameters(self, seed)

    method = "nerv"

    def decode(self, gamma: torch.Tensor) -> torch.Tensor:
        return self.decoder(gamma)

    def transmitted_components(self) -> tuple:
        return ("decoder",)


class HNeRVModel(nn.Module):
    """Hybrid baseline: encoder on full frames drives one conv decoder."""

    def __init__(
        self,
        arch: ArchConfig,
        widths: Sequence[int],
        seed: int = 0,
    ):
        super().__init__()
        c = arch.embed_shape[0]
        self.encoder = Encoder(arch)
        self.decoder = ConvDecoder(c, widths, arch.strides)
        self.arch = arch
        init_parameters(self, seed)

    method = "hnerv"

    def embed(self, frames: torch.Tensor) -> torch.Tensor:
        return self.encoder(frames)

    def decode(self, embeddings: torch.Tensor) -> torch.Tensor:
        return self.decoder(embeddings)

    def transmitted_components(self) -> tuple:
        return ("decoder",)


def forward_dual(model: DualStreamModel, frame: np.ndarray, i: int, num_frames: int):
    """Single-frame reconstruction returning (recon, hf_part, lf_part) as
    float32 arrays, unclipped."""
    hp = model.high_pass_frames(frame[None])
    gamma = encode(normalize_index(i, num_frames), model.posenc_cfg)
    lo, hi = split(gamma, model.posenc_cfg)
    with torch.no_grad():
        emb = model.embed(torch.from_numpy(hp.astype(np.float32)))
        recon, hf, lf = model.decode(
            emb,
            torch.from_numpy(lo[None].astype(np.float32)),
            torch.from_numpy(hi[None].astype(np.float32)),
        )
    return recon[0].numpy(), hf[0].numpy(), lf[0].numpy()


def forward_nerv_baseline(model: NeRVModel, i: int, num_frames: int) -> np.ndarray:
    gamma = encode(normalize_index(i, num_frames), model.posenc_cfg)
    with torch.no_grad():
        out = model.decode(torch.from_numpy(gamma[None].astype(np.float32)))
    return out[0].numpy()


def forward_hnerv_baseline(model: HNeRVModel, frame: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        emb = model.embed(torch.from_numpy(frame[None].astype(np.float32)))
        out = model.decode(emb)
    return out[0].numpy()


def frame_embeddings(model, video_frames: np.ndarray) -> np.ndarray:
    """Per-frame embeddings (T, c, h, w) from a model's encoder pathway."""
    if isinstance(model, DualStreamModel):
        inputs = model.high_pass_frames(video_frames).astype(np.float32)
    elif isinstance(model, HNeRVModel):
        inputs = video_frames.astype(np.float32)
    else:
        raise TypeError("index-only models have no frame embeddings")
    with torch.no_grad():
        emb = model.embed(torch.from_numpy(inputs))
    return emb.numpy()


def adjacent_cosine_similarity(embeddings: np.ndarray) -> np.ndarray:
    """Cosine similarity between each pair of consecutive embeddings."""
    flat = embeddings.reshape(embeddings.shape[0], -1).astype(np.float64)
    a, b = flat[:-1], flat[1:]
    denom = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    denom = np.where(denom == 0.0, 1.0, denom)
    return (a * b).sum(axis=1) / denom
