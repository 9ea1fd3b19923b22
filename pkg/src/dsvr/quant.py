"""Per-tensor affine quantization to a configurable bit width."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuantTensor:
    shape: tuple
    bits: int
    min_val: float
    scale: float
    codes: np.ndarray  # flat uint16 in [0, 2^bits - 1]

    @property
    def numel(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1


def quantize(t: np.ndarray, bits: int) -> QuantTensor:
    """Affine-quantize a tensor: codes = round((t - min) / scale).

    scale spans [min, max] over 2^bits - 1 steps; a constant tensor gets
    scale 0 and all-zero codes.
    """
    if not (1 <= bits <= 16):
        raise ValueError(f"bits must lie in [1, 16], got {bits}")
    t = np.asarray(t)
    if not np.isfinite(t).all():
        raise ValueError("cannot quantize non-finite values")
    flat = t.astype(np.float64).ravel()
    # min/scale are kept float32-representable: they travel as f32 in the
    # container and the reconstruction must match bit-for-bit.
    lo = float(np.float32(flat.min()))
    hi = float(flat.max())
    levels = (1 << bits) - 1
    scale = float(np.float32((hi - lo) / levels)) if hi > lo else 0.0
    if scale <= 0.0:
        return QuantTensor(
            shape=tuple(t.shape),
            bits=bits,
            min_val=lo,
            scale=0.0,
            codes=np.zeros(flat.size, dtype=np.uint16),
        )
    codes = np.clip(np.round((flat - lo) / scale), 0, levels).astype(np.uint16)
    return QuantTensor(
        shape=tuple(t.shape), bits=bits, min_val=lo, scale=scale, codes=codes
    )


def dequantize(q: QuantTensor) -> np.ndarray:
    """min + codes * scale, restored to the original shape, float32."""
    vals = q.min_val + q.codes.astype(np.float64) * q.scale
    return vals.reshape(q.shape).astype(np.float32)
