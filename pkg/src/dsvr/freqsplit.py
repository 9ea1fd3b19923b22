"""FFT-based complementary high-pass / low-pass frame decomposition.

The spectrum is split per axis: the low band is a centered span covering
(1 - keep_ratio) of the axis, the high band is its exact complement. Masks
are kept conjugate-symmetric so filtering a real frame returns a real frame
up to float tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SpectralMask:
    """Binary masks over the centered (fftshifted) 2-D spectrum.

    ``low`` and ``high`` are exact complements; both are symmetric under
    point reflection about the spectrum center.
    """

    keep_ratio: float
    height: int
    width: int
    low: np.ndarray  # bool (H, W), centered coordinates

    @property
    def high(self) -> np.ndarray:
        return ~self.low


def _axis_low_set(n: int, span: int) -> np.ndarray:
    """Boolean low-band membership per fftshifted index of a length-n axis.

    A span containing DC can only be conjugate-symmetric with odd
    cardinality, except that on an even-length axis the self-conjugate
    Nyquist bin can complete an even span. Even spans on odd axes are
    shrunk by one.
    """
    span = max(1, min(span, n))
    freqs = np.fft.fftshift(np.fft.fftfreq(n, d=1.0 / n)).round().astype(int)
    if span % 2 == 1:
        half = (span - 1) // 2
        return np.abs(freqs) <= half
    if n % 2 == 0:
        half = span // 2 - 1
        return (np.abs(freqs) <= half) | (freqs == -n // 2)
    return np.abs(freqs) <= span // 2 - 1


def build_mask(height: int, width: int, keep_ratio: float) -> SpectralMask:
    """Build the complementary low/high masks for ``keep_ratio`` high band."""
    if not (0.0 < keep_ratio < 1.0):
        raise ValueError(f"keep_ratio must lie strictly in (0, 1), got {keep_ratio}")
    if height < 4 or width < 4:
        raise ValueError("mask dimensions must be at least 4x4")
    span_h = int(round((1.0 - keep_ratio) * height))
    span_w = int(round((1.0 - keep_ratio) * width))
    low = np.outer(_axis_low_set(height, span_h), _axis_low_set(width, span_w))
    return SpectralMask(keep_ratio=keep_ratio, height=height, width=width, low=low)


def _apply(frame: np.ndarray, mask: SpectralMask, band: np.ndarray) -> np.ndarray:
    if frame.shape[-2:] != (mask.height, mask.width):
        raise ValueError(
            f"frame spatial shape {frame.shape[-2:]} does not match mask "
            f"({mask.height}, {mask.width})"
        )
    m = np.fft.ifftshift(band)
    spec = np.fft.fft2(frame.astype(np.float64), axes=(-2, -1))
    out = np.fft.ifft2(spec * m, axes=(-2, -1)).real
    return out.astype(frame.dtype) if frame.dtype == np.float32 else out


def high_pass(frame: np.ndarray, mask: SpectralMask) -> np.ndarray:
    """Keep only the high band. Output is not clipped to [0, 1]."""
    return _apply(frame, mask, mask.high)


def low_pass(frame: np.ndarray, mask: SpectralMask) -> np.ndarray:
    """Keep only the low band. Output is not clipped to [0, 1]."""
    return _apply(frame, mask, mask.low)
