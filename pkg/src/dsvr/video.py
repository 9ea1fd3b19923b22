"""Video data model, frame I/O and the synthetic test-clip generator.

Frames live in float32 arrays of shape (T, 3, H, W) with values in [0, 1].
8-bit conversion happens only at file I/O boundaries.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from PIL import Image

CACHE_MAGIC = b"DSVRVID0"
IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp"}


class VideoError(ValueError):
    """Raised for malformed video data or frame directories."""


@dataclass(frozen=True)
class VideoTensor:
    """A (T, 3, H, W) float32 stack of frames in [0, 1].

    Treated as immutable after construction; loaders and filters always
    produce fresh arrays.
    """

    frames: np.ndarray
    fps: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        f = self.frames
        if f.ndim != 4:
            raise VideoError(f"expected (T, C, H, W) frames, got shape {f.shape}")
        if f.shape[0] < 1:
            raise VideoError("video must contain at least one frame")
        if f.shape[1] != 3:
            raise VideoError(f"expected 3 channels, got {f.shape[1]}")
        if f.dtype != np.float32:
            object.__setattr__(self, "frames", f.astype(np.float32))
            f = self.frames
        if not np.isfinite(f).all():
            raise VideoError("frames contain non-finite values")
        if f.min() < 0.0 or f.max() > 1.0:
            raise VideoError(
                f"frame values outside [0, 1]: min={f.min():.4g} max={f.max():.4g}"
            )

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[2]

    @property
    def width(self) -> int:
        return self.frames.shape[3]

    def frame(self, i: int) -> np.ndarray:
        return self.frames[i]


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for the synthetic clip: a drifting smooth gradient plus a
    flickering high-frequency texture.

    The texture rides on a vertical Nyquist carrier, so its spectral energy
    stays in the high band of an 80/20 axis split regardless of
    ``hf_texture_period``; the period only controls the horizontal
    modulation. ``hf_flicker`` in [0, 1] scales per-frame random phase and
    amplitude jitter drawn independently for each column block, so at full
    flicker the texture decorrelates between adjacent frames.
    """

    num_frames: int = 16
    height: int = 64
    width: int = 128
    lf_motion: float = 1.0
    hf_texture_period: int = 4
    hf_flicker: float = 1.0
    seed: int = 0
    # the smooth gradient carries most of the energy, as in natural video;
    # peak amplitudes sum below 0.5 so no clipping occurs
    lf_amplitude: float = 0.25
    hf_amplitude: float = 0.08

    def __post_init__(self):
        if self.num_frames < 1:
            raise VideoError("num_frames must be >= 1")
        if self.height % 2 or self.width % 2:
            raise VideoError("height and width must be even")
        if not (2 <= self.hf_texture_period <= min(self.height, self.width) // 4):
            raise VideoError(
                "hf_texture_period must lie in [2, min(H, W)/4], got "
                f"{self.hf_texture_period}"
            )
        if not (0.0 <= self.hf_flicker <= 1.0):
            raise VideoError("hf_flicker must lie in [0, 1]")


def synth_video(spec: SynthSpec) -> VideoTensor:
    """Render the deterministic synthetic clip described by ``spec``.

    The low-frequency layer is a one-cycle sinusoidal gradient translating
    ``lf_motion`` pixels per frame with distinct per-channel phases. The
    high-frequency layer is a row-alternating carrier modulated at
    ``hf_texture_period`` pixels, with per-frame phase jitter drawn from a
    seeded generator. Amplitudes are chosen so no clipping occurs.
    """
    T, H, W = spec.num_frames, spec.height, spec.width
    rng = np.random.default_rng(spec.seed)
    block = 2 * spec.hf_texture_period
    n_blocks = (W + block - 1) // block
    phase_jitter = 2.0 * np.pi * spec.hf_flicker * rng.random((T, n_blocks))
    amp_jitter = 1.0 + spec.hf_flicker * (rng.random((T, n_blocks)) - 0.5)

    y = np.arange(H, dtype=np.float64)[:, None]
    x = np.arange(W, dtype=np.float64)[None, :]
    carrier = np.cos(np.pi * y)  # +1/-1 alternating rows: vertical Nyquist
    channel_phase = np.array([0.0, 2.0, 4.0]) * np.pi / 3.0

    frames = np.empty((T, 3, H, W), dtype=np.float32)
    for t in range(T):
        drift = spec.lf_motion * t
        grad_x = 2.0 * np.pi * (x + drift) / W
        grad_y = 2.0 * np.pi * (y + 0.5 * drift) / H
        phase = np.repeat(phase_jitter[t], block)[:W][None, :]
        amp = np.repeat(amp_jitter[t], block)[:W][None, :]
        tex = (
            spec.hf_amplitude
            * amp
            * carrier
            * np.cos(2.0 * np.pi * x / spec.hf_texture_period + phase)
        )
        for c in range(3):
            lf = 0.5 + 0.5 * spec.lf_amplitude * (
                np.sin(grad_x + channel_phase[c]) + np.cos(grad_y - channel_phase[c])
            )
            frames[t, c] = (lf + tex).astype(np.float32)
    np.clip(frames, 0.0, 1.0, out=frames)
    return VideoTensor(frames=frames, name=f"synth-{spec.seed}")


def load_video_dir(
    path,
    crop: Optional[Tuple[int, int]] = None,
    limit: Optional[int] = None,
    crop_offset: Optional[Tuple[int, int]] = None,
) -> VideoTensor:
    """Load lexicographically ordered image frames from a directory.

    ``crop`` is (H, W); the crop window is centered unless ``crop_offset``
    gives an explicit (top, left). All frames must share dimensions.
    """
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)
    if limit is not None:
        files = files[:limit]
    if not files:
        raise VideoError(f"no image frames found in {path}")

    frames = []
    shape = None
    for f in files:
        with Image.open(f) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise VideoError(
                f"inconsistent frame size: {f.name} is {arr.shape[:2]}, "
                f"expected {shape[:2]}"
            )
        if crop is not None:
            ch, cw = crop
            h, w = arr.shape[:2]
            if ch > h or cw > w:
                raise VideoError(f"crop {crop} larger than source {(h, w)}")
            if crop_offset is None:
                top, left = (h - ch) // 2, (w - cw) // 2
            else:
                top, left = crop_offset
                if top < 0 or left < 0 or top + ch > h or left + cw > w:
                    raise VideoError(f"crop offset {crop_offset} out of bounds")
            arr = arr[top : top + ch, left : left + cw]
        frames.append(arr.transpose(2, 0, 1))
    return VideoTensor(frames=np.stack(frames), name=path.name)


def save_frames(video: VideoTensor, path) -> int:
    """Write one 8-bit PNG per frame, named %05d.png. Returns frame count."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for i in range(video.num_frames):
        arr = np.round(video.frames[i] * 255.0).astype(np.uint8).transpose(1, 2, 0)
        try:
            Image.fromarray(arr).save(path / f"{i:05d}.png")
        except OSError as e:
            raise VideoError(f"failed to write frame {i}: {e}") from e
    return video.num_frames


def save_cache(video: VideoTensor, path) -> None:
    """Write the raw float32 cache: magic, T/C/H/W as u32 LE, row-major data."""
    data = np.ascontiguousarray(video.frames, dtype="<f4")
    with open(path, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(struct.pack("<4I", *data.shape))
        f.write(data.tobytes())


def load_cache(path) -> VideoTensor:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != CACHE_MAGIC:
            raise VideoError(f"bad cache magic {magic!r}")
        t, c, h, w = struct.unpack("<4I", f.read(16))
        raw = f.read(t * c * h * w * 4)
    frames = np.frombuffer(raw, dtype="<f4").reshape(t, c, h, w).copy()
    return VideoTensor(frames=frames)
