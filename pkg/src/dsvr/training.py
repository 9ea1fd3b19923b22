"""Per-video overfitting loop with L2 objective and divergence detection.

The optimizer is Adam with linear warmup over the first tenth of the steps
followed by cosine decay. The returned model carries the best-PSNR weights
seen at evaluation epochs, not the last-epoch weights.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from .metrics import ms_ssim as _ms_ssim
from .metrics import psnr as _psnr
from .models import DualStreamModel, HNeRVModel, NeRVModel
from .posenc import encode_all, split
from .video import VideoTensor

DIVERGENCE_PSNR_DB = 15.0


class TrainingError(RuntimeError):
    """Raised when the loss becomes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 2
    lr: float = 1e-3
    warmup_frac: float = 0.1
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass
class TrainReport:
    loss_history: np.ndarray  # per-epoch mean training loss
    psnr_history: np.ndarray  # per-epoch mean PSNR; NaN where not evaluated
    final_frame_psnr: np.ndarray  # per-frame PSNR of the returned weights
    final_psnr: float
    best_epoch: int
    wall_time: float
    diverged: bool

    def to_csv(self) -> str:
        lines = ["epoch,loss,psnr"]
        for e, (l, p) in enumerate(zip(self.loss_history, self.psnr_history)):
            lines.append(f"{e},{l:.8g},{'' if np.isnan(p) else f'{p:.4f}'}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        return (
            f"epochs={len(self.loss_history)} best_epoch={self.best_epoch} "
            f"final_psnr={self.final_psnr:.3f}dB diverged={self.diverged} "
            f"wall_time={self.wall_time:.1f}s"
        )


def l2_loss(pred, gt):
    """Mean squared difference over all elements; torch in, torch out."""
    if isinstance(pred, torch.Tensor) and isinstance(gt, torch.Tensor):
        if pred.shape != gt.shape:
            raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
        loss = torch.mean((pred - gt) ** 2)
        if not torch.isfinite(loss):
            raise TrainingError("non-finite loss")
        return loss
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    loss = float(np.mean((pred.astype(np.float64) - gt.astype(np.float64)) ** 2))
    if not np.isfinite(loss):
        raise TrainingError("non-finite loss")
    return loss


class _Batcher:
    """Precomputed per-frame model inputs; the filtered frames and index
    encodings never change during training."""

    def __init__(self, model, video: VideoTensor):
        frames = video.frames
        self.gt = torch.from_numpy(frames.copy())
        self.num_frames = video.num_frames
        if isinstance(model, DualStreamModel):
            hp = model.high_pass_frames(frames).astype(np.float32)
            self.enc_input = torch.from_numpy(hp)
            g = encode_all(video.num_frames, model.posenc_cfg)
            lo, hi = split(g, model.posenc_cfg)
            self.gamma_low = torch.from_numpy(lo.astype(np.float32))
            self.gamma_high = torch.from_numpy(hi.astype(np.float32))
        elif isinstance(model, HNeRVModel):
            self.enc_input = torch.from_numpy(frames.copy())
        elif isinstance(model, NeRVModel):
            g = encode_all(video.num_frames, model.posenc_cfg)
            self.gamma = torch.from_numpy(g.astype(np.float32))
        else:
            raise TypeError(f"unsupported model type {type(model).__name__}")
        self.model = model

    def forward(self, idx: torch.Tensor) -> torch.Tensor:
        m = self.model
        if isinstance(m, DualStreamModel):
            emb = m.embed(self.enc_input[idx])
            recon, _, _ = m.decode(emb, self.gamma_low[idx], self.gamma_high[idx])
            return recon
        if isinstance(m, HNeRVModel):
            return m.decode(m.embed(self.enc_input[idx]))
        return m.decode(self.gamma[idx])


def _lr_lambda(step: int, total_steps: int, warmup_steps: int) -> float:
    if warmup_steps > 0 and step < warmup_steps:
        return (step + 1) / warmup_steps
    span = max(1, total_steps - warmup_steps)
    progress = min(1.0, (step - warmup_steps) / span)
    return 0.5 * (1.0 + np.cos(np.pi * progress))


def reconstruct_video(model, video: VideoTensor, batch_size: int = 8) -> np.ndarray:
    """Full reconstruction, clipped to [0, 1], shape (T, 3, H, W)."""
    batcher = _Batcher(model, video)
    outs = []
    with torch.no_grad():
        for start in range(0, video.num_frames, batch_size):
            idx = torch.arange(start, min(start + batch_size, video.num_frames))
            outs.append(batcher.forward(idx).clamp(0.0, 1.0))
    return torch.cat(outs).numpy()


def train(model, video: VideoTensor, cfg: TrainConfig):
    """Overfit ``model`` to ``video``; returns (model, TrainReport).

    Deterministic given cfg.seed: the seed drives only the per-epoch frame
    order (initialization is seeded at model construction).
    """
    model.arch.validate_frame(video.height, video.width)
    start_time = time.time()
    batcher = _Batcher(model, video)
    num_frames = video.num_frames
    steps_per_epoch = (num_frames + cfg.batch_size - 1) // cfg.batch_size
    total_steps = cfg.epochs * steps_per_epoch
    warmup_steps = int(round(cfg.warmup_frac * total_steps))

    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    sched = torch.optim.lr_scheduler.LambdaLR(
        opt, lambda s: _lr_lambda(s, total_steps, warmup_steps)
    )
    shuffle_gen = torch.Generator().manual_seed(cfg.seed)

    loss_history = np.zeros(cfg.epochs)
    psnr_history = np.full(cfg.epochs, np.nan)
    best_psnr = -np.inf
    best_epoch = -1
    best_state = None

    for epoch in range(cfg.epochs):
        model.train()
        order = torch.randperm(num_frames, generator=shuffle_gen)
        epoch_loss = 0.0
        for step in range(steps_per_epoch):
            idx = order[step * cfg.batch_size : (step + 1) * cfg.batch_size]
            recon = batcher.forward(idx)
            loss = torch.mean((recon - batcher.gt[idx]) ** 2)
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, step {step}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            epoch_loss += loss.item() * len(idx)
        loss_history[epoch] = epoch_loss / num_frames

        if (epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            model.eval()
            recon = reconstruct_video(model, video)
            frame_psnr = [
                _psnr(recon[i], video.frames[i]) for i in range(num_frames)
            ]
            psnr_history[epoch] = float(np.mean(frame_psnr))
            if psnr_history[epoch] > best_psnr:
                best_psnr = psnr_history[epoch]
                best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())

    model.load_state_dict(best_state)
    model.eval()
    recon = reconstruct_video(model, video)
    final_frame_psnr = np.array(
        [_psnr(recon[i], video.frames[i]) for i in range(num_frames)]
    )
    report = TrainReport(
        loss_history=loss_history,
        psnr_history=psnr_history,
        final_frame_psnr=final_frame_psnr,
        final_psnr=float(best_psnr),
        best_epoch=best_epoch,
        wall_time=time.time() - start_time,
        diverged=bool(best_psnr < DIVERGENCE_PSNR_DB),
    )
    return model, report


@dataclass
class EvalReport:
    frame_psnr: np.ndarray
    frame_ms_ssim: np.ndarray
    frame_lpips: Optional[np.ndarray] = None

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.frame_psnr))

    @property
    def mean_ms_ssim(self) -> float:
        return float(np.mean(self.frame_ms_ssim))

    def to_csv(self) -> str:
        header = "frame,psnr,ms_ssim" + (",lpips" if self.frame_lpips is not None else "")
        lines = [header]
        for i in range(len(self.frame_psnr)):
            row = f"{i},{self.frame_psnr[i]:.4f},{self.frame_ms_ssim[i]:.6f}"
            if self.frame_lpips is not None:
                row += f",{self.frame_lpips[i]:.6f}"
            lines.append(row)
        return "\n".join(lines) + "\n"


def evaluate(model, video: VideoTensor) -> EvalReport:
    """Per-frame PSNR and MS-SSIM of the model's clipped reconstruction."""
    recon = reconstruct_video(model, video)
    return evaluate_reconstruction(recon, video)


def evaluate_reconstruction(recon: np.ndarray, video: VideoTensor) -> EvalReport:
    from .metrics import compute_lpips, lpips_available

    t = video.num_frames
    frame_psnr = np.array([_psnr(recon[i], video.frames[i]) for i in range(t)])
    frame_ssim = np.array([_ms_ssim(recon[i], video.frames[i]) for i in range(t)])
    frame_lpips = None
    if lpips_available():
        frame_lpips = np.array(
            [compute_lpips(recon[i], video.frames[i]) for i in range(t)]
        )
    return EvalReport(
        frame_psnr=frame_psnr, frame_ms_ssim=frame_ssim, frame_lpips=frame_lpips
    )


def randomize_decoder(module: torch.nn.Module, seed: int) -> None:
    """Re-run the seeded init on one decoder, simulating a diverged state."""
    from .blocks import init_parameters

    init_parameters(module, seed)
