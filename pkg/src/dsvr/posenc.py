"""Sinusoidal encoding of the normalized frame index and its two-way split.

The encoding of t is (sin(b^0 pi t), cos(b^0 pi t), ..., sin(b^n pi t),
cos(b^n pi t)) with exponents 0..n consecutive. Splitting at exponent m
yields the inputs of the two low-frequency decoders. All trigonometry is
evaluated in float64 since phase error grows with b^x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PosEncConfig:
    base: float = 1.25  # frequency base, > 1
    split: int = 10  # highest exponent routed to the first decoder
    levels: int = 30  # highest exponent overall

    def __post_init__(self):
        if self.base <= 1.0:
            raise ValueError("base must be > 1")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if not (0 < self.split < self.levels):
            raise ValueError("split must satisfy 0 < split < levels")

    @property
    def encoded_length(self) -> int:
        return 2 * (self.levels + 1)

    @property
    def low_length(self) -> int:
        return 2 * (self.split + 1)

    @property
    def high_length(self) -> int:
        return 2 * (self.levels - self.split)


def normalize_index(i: int, num_frames: int) -> float:
    """Map frame index i in [0, T) to (i+1)/T in (0, 1]."""
    if num_frames <= 0:
        raise ValueError("num_frames must be positive")
    if not (0 <= i < num_frames):
        raise ValueError(f"frame index {i} out of range [0, {num_frames})")
    return (i + 1) / num_frames


def gamma(t: float, base: float, levels: int) -> np.ndarray:
    """Interleaved (sin, cos) pairs of base**x * pi * t for x = 0..levels."""
    if not (0.0 < t <= 1.0):
        raise ValueError(f"normalized index must lie in (0, 1], got {t}")
    exponents = np.arange(levels + 1, dtype=np.float64)
    phases = (float(base) ** exponents) * np.pi * t
    out = np.empty(2 * (levels + 1), dtype=np.float64)
    out[0::2] = np.sin(phases)
    out[1::2] = np.cos(phases)
    return out


def encode(t: float, cfg: PosEncConfig) -> np.ndarray:
    """Encode normalized index t into the interleaved sin/cos vector."""
    return gamma(t, cfg.base, cfg.levels)


def split(v: np.ndarray, cfg: PosEncConfig) -> tuple[np.ndarray, np.ndarray]:
    """Partition the encoding into (exponents 0..m, exponents m+1..n)."""
    if v.shape[-1] != cfg.encoded_length:
        raise ValueError(
            f"encoding length {v.shape[-1]} does not match config "
            f"({cfg.encoded_length})"
        )
    cut = cfg.low_length
    return v[..., :cut], v[..., cut:]


def encode_all(num_frames: int, cfg: PosEncConfig) -> np.ndarray:
    """Encodings of every frame index, shape (T, 2*(levels+1))."""
    return np.stack(
        [encode(normalize_index(i, num_frames), cfg) for i in range(num_frames)]
    )
