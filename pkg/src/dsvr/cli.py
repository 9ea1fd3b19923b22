"""Command-line pipeline: encode, decode, eval, rate-distortion sweeps and
feature visualization.

Exit codes: 0 success, 2 config error, 3 data error, 4 container error,
5 training diverged (artifacts are still written).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .bitstream import Bitstream, BitstreamError, bpp, decode_video, encode_video
from .budget import InfeasibleBudgetError, build_model, solve_budget_for_method
from .config import ConfigError, RunConfig, load_config
from .metrics import RDPoint, aggregate_rd
from .models import adjacent_cosine_similarity, frame_embeddings
from .training import evaluate_reconstruction, train
from .video import VideoError, VideoTensor, load_video_dir, save_frames, synth_video

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CONTAINER = 4
EXIT_DIVERGED = 5


def parse_size(text: str) -> int:
    """'0.3M', '300000' or '3e5' -> parameter count."""
    text = str(text).strip()
    try:
        if text.lower().endswith("m"):
            return int(round(float(text[:-1]) * 1e6))
        if text.lower().endswith("k"):
            return int(round(float(text[:-1]) * 1e3))
        return int(round(float(text)))
    except ValueError as e:
        raise ConfigError(f"bad size {text!r}") from e


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    mapping = {
        "epochs": ("train", "epochs"),
        "seed": ("train", "seed"),
        "keep_ratio": ("freqsplit", "keep_ratio"),
        "bits_embed": ("codec", "bits_embed"),
        "bits_weights": ("codec", "bits_weights"),
    }
    for attr, (section, key) in mapping.items():
        val = getattr(args, attr, None)
        if val is not None:
            cfg.set(section, key, val)
    return cfg


def _resolve_config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    return _apply_overrides(cfg, args)


def _load_source(args, cfg: RunConfig) -> VideoTensor:
    if getattr(args, "video", None):
        core = cfg.values["core"]
        crop = None
        if core["crop_height"] and core["crop_width"]:
            crop = (core["crop_height"], core["crop_width"])
        limit = core["limit"] or None
        return load_video_dir(args.video, crop=crop, limit=limit)
    if getattr(args, "synth", None) is not None:
        for item in filter(None, args.synth.split(",")):
            key, _, val = item.partition("=")
            cfg.set("core", f"synth_{key.strip()}", val.strip())
        return synth_video(cfg.synth_spec())
    raise ConfigError("provide a source: --video DIR or --synth [overrides]")


def _echo_config(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.render())


def _train_pipeline(method: str, size: int, video: VideoTensor, cfg: RunConfig):
    arch = cfg.arch()
    posenc_cfg = cfg.posenc_cfg()
    arch.validate_frame(video.height, video.width)
    solution = solve_budget_for_method(method, size, arch, posenc_cfg)
    model = build_model(
        method,
        solution,
        arch,
        posenc_cfg,
        keep_ratio=cfg.get("freqsplit", "keep_ratio"),
        seed=cfg.get("train", "seed"),
    )
    model, report = train(model, video, cfg.train_cfg())
    return model, report, solution


def cmd_encode(args) -> int:
    cfg = _resolve_config(args)
    video = _load_source(args, cfg)
    out = Path(args.out)
    _echo_config(cfg, out)
    size = parse_size(args.size)
    model, report, solution = _train_pipeline(args.method, size, video, cfg)
    bs = encode_video(
        model,
        video,
        bits_embed=cfg.get("codec", "bits_embed"),
        bits_weights=cfg.get("codec", "bits_weights"),
    )
    stream_path = out / "stream.dsvr"
    nbytes = bs.save(stream_path)
    (out / "train_report.csv").write_text(report.to_csv())
    (out / "summary.txt").write_text(
        f"method={args.method} size={size}\n"
        f"{solution.summary()}\n"
        f"{report.summary()}\n"
        f"bitstream={nbytes} bytes bpp={bpp(bs):.4f}\n"
    )
    print(f"wrote {stream_path} ({nbytes} bytes, {bpp(bs):.4f} bpp)")
    print(report.summary())
    if report.diverged:
        print("warning: training diverged; artifact written anyway", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_decode(args) -> int:
    import json

    bs = Bitstream.load(args.input)
    video = decode_video(bs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    count = save_frames(video, out)
    (out / "header.json").write_text(json.dumps(bs.header, indent=1, sort_keys=True))
    print(f"decoded {count} frames of {video.height}x{video.width} to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    source = _load_source(args, cfg)
    bs = Bitstream.load(args.input)
    decoded = decode_video(bs)
    if decoded.frames.shape != source.frames.shape:
        raise VideoError(
            f"decoded shape {decoded.frames.shape} does not match source "
            f"{source.frames.shape}"
        )
    report = evaluate_reconstruction(decoded.frames, source)
    out = Path(args.out) if args.out else None
    if out:
        _echo_config(cfg, out)
        (out / "metrics.csv").write_text(report.to_csv())
    print(
        f"frames={source.num_frames} bpp={bpp(bs):.4f} "
        f"psnr={report.mean_psnr:.3f} ms_ssim={report.mean_ms_ssim:.5f}"
    )
    return EXIT_OK


def cmd_rd(args) -> int:
    cfg = _resolve_config(args)
    video = _load_source(args, cfg)
    out = Path(args.out)
    _echo_config(cfg, out)
    sizes = [parse_size(s) for s in args.sizes.split(",")]
    points = []
    failures = []
    for size in sizes:
        try:
            model, report, _ = _train_pipeline(args.method, size, video, cfg)
            bs = encode_video(
                model,
                video,
                bits_embed=cfg.get("codec", "bits_embed"),
                bits_weights=cfg.get("codec", "bits_weights"),
            )
            sub = out / f"size_{size}"
            sub.mkdir(parents=True, exist_ok=True)
            bs.save(sub / "stream.dsvr")
            (sub / "train_report.csv").write_text(report.to_csv())
            decoded = decode_video(bs)
            ev = evaluate_reconstruction(decoded.frames, video)
            point = RDPoint(
                model_size=size,
                bpp=bpp(bs),
                psnr=ev.mean_psnr,
                ms_ssim=ev.mean_ms_ssim,
            )
            points.append(point)
            print(
                f"size {size}: bpp={point.bpp:.4f} psnr={point.psnr:.3f} "
                f"ms_ssim={point.ms_ssim:.5f}"
                + (" [diverged]" if report.diverged else "")
            )
        except (InfeasibleBudgetError, VideoError, BitstreamError) as e:
            failures.append((size, str(e)))
            print(f"size {size}: failed ({e})", file=sys.stderr)
    if len(points) >= 2:
        table = aggregate_rd(points)
        rows = table.rows
        inversions = table.inversions
    elif points:
        table = None
        rows = points
        inversions = []
    else:
        raise VideoError("rate-distortion sweep produced no points")
    (out / "rd_curve.csv").write_text(
        "size_params,bpp,psnr,ms_ssim\n"
        + "".join(
            f"{r.model_size},{r.bpp:.6f},{r.psnr:.4f},{r.ms_ssim:.6f}\n" for r in rows
        )
    )
    _plot_rd(rows, out / "rd_curve.png")
    for lo, hi in inversions:
        print(f"warning: PSNR inversion between bpp {lo:.4f} and {hi:.4f}")
    for size, msg in failures:
        print(f"warning: size {size} failed: {msg}")
    print(f"wrote {out / 'rd_curve.csv'} with {len(rows)} points")
    return EXIT_OK


def _plot_rd(rows, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([r.bpp for r in rows], [r.psnr for r in rows], "o-")
    ax.set_xlabel("bits per pixel")
    ax.set_ylabel("PSNR (dB)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_viz_features(args) -> int:
    cfg = _resolve_config(args)
    video = _load_source(args, cfg)
    out = Path(args.out)
    _echo_config(cfg, out)
    size = parse_size(args.size)
    tiles = {}
    cosines = {}
    for method in ("dual", "hnerv"):
        model, _, _ = _train_pipeline(method, size, video, cfg)
        emb = frame_embeddings(model, video.frames)
        tiles[method] = emb.reshape(emb.shape[0], -1)
        cosines[method] = adjacent_cosine_similarity(emb)
    _plot_feature_grid(tiles, video.num_frames, out / "features.png")
    lines = ["pair,dual,hnerv"]
    for i in range(video.num_frames - 1):
        lines.append(f"{i}-{i + 1},{cosines['dual'][i]:.6f},{cosines['hnerv'][i]:.6f}")
    (out / "cosine_similarity.csv").write_text("\n".join(lines) + "\n")
    print(
        f"adjacent-embedding cosine similarity: "
        f"dual={cosines['dual'].mean():.4f} hnerv={cosines['hnerv'].mean():.4f}"
    )
    return EXIT_OK


def _plot_feature_grid(tiles: dict, num_frames: int, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    methods = list(tiles)
    cols = min(num_frames, 8)
    fig, axes = plt.subplots(
        len(methods), cols, figsize=(1.6 * cols, 1.9 * len(methods)), squeeze=False
    )
    for r, method in enumerate(methods):
        for c in range(cols):
            ax = axes[r][c]
            ax.imshow(tiles[method][c].reshape(8, 16), cmap="viridis")
            ax.set_xticks([])
            ax.set_yticks([])
            if c == 0:
                ax.set_ylabel(method)
            if r == 0:
                ax.set_title(f"frame {c}", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsvr", description="dual-stream neural video codec"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, source=True):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--epochs", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--keep-ratio", dest="keep_ratio", type=float)
        p.add_argument("--bits-embed", dest="bits_embed", type=int)
        p.add_argument("--bits-weights", dest="bits_weights", type=int)
        if source:
            p.add_argument("--video", help="directory of frames")
            p.add_argument(
                "--synth",
                nargs="?",
                const="",
                help="use the synthetic clip; optional comma overrides "
                "(e.g. frames=16,seed=7)",
            )

    p = sub.add_parser("encode", help="train a model and write a bitstream")
    add_common(p)
    p.add_argument("--method", choices=("dual", "nerv", "hnerv"), default="dual")
    p.add_argument("--size", required=True, help="parameter budget, e.g. 0.3M")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a bitstream to frames")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="decode and score against the source")
    add_common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rd", help="rate-distortion sweep over model sizes")
    add_common(p)
    p.add_argument("--method", choices=("dual", "nerv", "hnerv"), default="dual")
    p.add_argument("--sizes", required=True, help="comma list, e.g. 0.3M,0.5M")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rd)

    p = sub.add_parser("viz-features", help="embedding tiles and similarity")
    add_common(p)
    p.add_argument("--size", default="0.3M")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_viz_features)

    return parser


def main(argv=None) -> int:
    threads = os.environ.get("DSVR_NUM_THREADS")
    if threads:
        import torch

        torch.set_num_threads(max(1, int(threads)))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleBudgetError, VideoError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except BitstreamError as e:
        print(f"container error: {e}", file=sys.stderr)
        return EXIT_CONTAINER


if __name__ == "__main__":
    sys.exit(main())
