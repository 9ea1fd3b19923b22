"""Quality metrics (PSNR, multi-scale SSIM) and rate-distortion aggregation.

A perceptual metric can be plugged in via ``register_lpips``; none is
bundled.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WINDOW_SIZE = 11
_WINDOW_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03

_lpips_fn: Optional[Callable] = None


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/MSE) with MAX=1; capped at 100 dB for near-zero MSE."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse < 1e-10:
        return 100.0
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_window(dtype) -> torch.Tensor:
    half = (_WINDOW_SIZE - 1) / 2.0
    coords = torch.arange(_WINDOW_SIZE, dtype=dtype) - half
    g = torch.exp(-(coords**2) / (2.0 * _WINDOW_SIGMA**2))
    g = g / g.sum()
    return torch.outer(g, g)


def _ssim_and_cs(x: torch.Tensor, y: torch.Tensor) -> tuple:
    """Mean SSIM and contrast-structure terms over a (1, C, H, W) pair,
    Gaussian-windowed, valid padding, channel maps averaged."""
    c = x.shape[1]
    win = _gaussian_window(x.dtype).expand(c, 1, _WINDOW_SIZE, _WINDOW_SIZE)
    mu_x = F.conv2d(x, win, groups=c)
    mu_y = F.conv2d(y, win, groups=c)
    mu_xx, mu_yy, mu_xy = mu_x * mu_x, mu_y * mu_y, mu_x * mu_y
    sigma_x = F.conv2d(x * x, win, groups=c) - mu_xx
    sigma_y = F.conv2d(y * y, win, groups=c) - mu_yy
    sigma_xy = F.conv2d(x * y, win, groups=c) - mu_xy
    c1, c2 = _K1**2, _K2**2
    cs_map = (2.0 * sigma_xy + c2) / (sigma_x + sigma_y + c2)
    ssim_map = ((2.0 * mu_xy + c1) / (mu_xx + mu_yy + c1)) * cs_map
    return float(ssim_map.mean()), float(cs_map.mean())


def msssim_scales(height: int, width: int) -> int:
    """Number of usable scales: the 11-tap window must fit after halvings."""
    k = 0
    side = min(height, width)
    while k < len(MSSSIM_WEIGHTS) and side >= _WINDOW_SIZE:
        k += 1
        side //= 2
    return k


def ms_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Multi-scale SSIM on [0,1] frames (C,H,W) or videos (T,C,H,W).

    Uses the community-standard five scale weights, renormalized when the
    frame is too small for all five; channel SSIM maps are averaged.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 4:
        return float(np.mean([ms_ssim(fa, fb) for fa, fb in zip(a, b)]))
    if a.ndim == 2:
        a, b = a[None], b[None]
    n_scales = msssim_scales(a.shape[-2], a.shape[-1])
    if n_scales < 1:
        raise ValueError(f"frame {a.shape[-2:]} too small for an 11-tap window")
    weights = np.asarray(MSSSIM_WEIGHTS[:n_scales])
    weights = weights / weights.sum()

    x = torch.from_numpy(a)[None]
    y = torch.from_numpy(b)[None]
    result = 1.0
    with torch.no_grad():
        for level in range(n_scales):
            ssim_mean, cs_mean = _ssim_and_cs(x, y)
            if level == n_scales - 1:
                result *= max(ssim_mean, 0.0) ** weights[level]
            else:
                result *= max(cs_mean, 0.0) ** weights[level]
                x = F.avg_pool2d(x, 2)
                y = F.avg_pool2d(y, 2)
    return float(result)


def register_lpips(fn: Optional[Callable]) -> None:
    """Install a perceptual-metric callable taking (a, b) -> float."""
    global _lpips_fn
    _lpips_fn = fn


def lpips_available() -> bool:
    return _lpips_fn is not None


def compute_lpips(a: np.ndarray, b: np.ndarray) -> float:
    if _lpips_fn is None:
        raise RuntimeError("no perceptual metric registered; call register_lpips")
    return float(_lpips_fn(a, b))


@dataclass(frozen=True)
class RDPoint:
    model_size: int
    bpp: float
    psnr: float
    ms_ssim: float

    def __post_init__(self):
        for v in (self.bpp, self.psnr, self.ms_ssim):
            if not np.isfinite(v):
                raise ValueError("rate-distortion fields must be finite")
        if self.ms_ssim > 1.0:
            raise ValueError("ms_ssim cannot exceed 1")


@dataclass
class RDTable:
    rows: list
    inversions: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["size_params,bpp,psnr,ms_ssim"]
        for r in self.rows:
            lines.append(f"{r.model_size},{r.bpp:.6f},{r.psnr:.4f},{r.ms_ssim:.6f}")
        return "\n".join(lines) + "\n"

    def series(self) -> tuple:
        return (
            np.array([r.bpp for r in self.rows]),
            np.array([r.psnr for r in self.rows]),
        )


def aggregate_rd(points: Sequence[RDPoint]) -> RDTable:
    """Sort points by rate, collapse duplicate rates, flag PSNR inversions."""
    if len(points) < 2:
        raise ValueError("need at least 2 rate-distortion points")
    by_bpp: dict = {}
    notes = []
    for p in points:
        if p.bpp in by_bpp:
            keep = max(by_bpp[p.bpp], p, key=lambda q: q.psnr)
            notes.append(f"duplicate bpp {p.bpp:.6f}: kept max-PSNR point")
            warnings.warn(notes[-1])
            by_bpp[p.bpp] = keep
        else:
            by_bpp[p.bpp] = p
    rows = sorted(by_bpp.values(), key=lambda q: q.bpp)
    inversions = []
    for lo, hi in zip(rows, rows[1:]):
        if hi.psnr < lo.psnr:
            inversions.append((lo.bpp, hi.bpp))
    return RDTable(rows=rows, inversions=inversions, notes=notes)
