"""Acceptance suite: one test per criterion, each printing a PASS line.

Criteria 8-11 share a session fixture that trains the dual model and the
hybrid baseline for 300 epochs on the standard synthetic clip with three
seeds each; expect minutes of CPU time.
"""

import copy
import time

import numpy as np
import pytest
import torch

from dsvr.bitstream import Bitstream, BitstreamError, bpp, decode_video, encode_video
from dsvr.budget import build_model, solve_budget_for_method
from dsvr.freqsplit import build_mask, high_pass, low_pass
from dsvr.huffman import huffman_decode, huffman_encode
from dsvr.metrics import psnr
from dsvr.models import (
    adjacent_cosine_similarity,
    desk_arch,
    frame_embeddings,
    paper_arch,
    tiny_arch,
)
from dsvr.posenc import PosEncConfig, encode, encode_all, split
from dsvr.quant import dequantize, quantize
from dsvr.training import TrainConfig, randomize_decoder, reconstruct_video, train
from dsvr.video import SynthSpec, synth_video

torch.set_num_threads(2)

POSENC = PosEncConfig()
SEEDS = (0, 1, 2)
BUDGET = 300_000
EPOCHS = 300


def _report(num, text):
    print(f"\n[PASS] criterion {num}: {text}")


@pytest.fixture(scope="session")
def clip():
    return synth_video(
        SynthSpec(
            num_frames=16,
            height=64,
            width=128,
            lf_motion=1.0,
            hf_texture_period=4,
            hf_flicker=1.0,
            seed=7,
        )
    )


@pytest.fixture(scope="session")
def overfit_runs(clip):
    """300-epoch training runs for both methods, three seeds each."""
    arch = desk_arch()
    runs = {}
    for method in ("dual", "hnerv"):
        for seed in SEEDS:
            solution = solve_budget_for_method(method, BUDGET, arch, POSENC)
            model = build_model(method, solution, arch, POSENC, seed=seed)
            cfg = TrainConfig(epochs=EPOCHS, batch_size=4, seed=seed, eval_every=10)
            model, report = train(model, clip, cfg)
            runs[(method, seed)] = (model, report)
    return runs


class TestCriterion1:
    def test_frequency_complementarity(self):
        rng = np.random.default_rng(0)
        mask = build_mask(64, 128, 0.2)
        start = time.time()
        worst = 0.0
        for _ in range(100):
            f = rng.random((3, 64, 128)).astype(np.float32)
            err = np.abs(high_pass(f, mask) + low_pass(f, mask) - f).max()
            worst = max(worst, float(err))
        elapsed = time.time() - start
        assert worst <= 1e-5
        assert elapsed < 10.0
        _report(1, f"complementarity max err {worst:.2e} on 100 frames in {elapsed:.2f}s")


class TestCriterion2:
    def test_positional_encoding_against_direct_evaluation(self):
        import math

        rng = np.random.default_rng(1)
        worst = 0.0
        for t in rng.uniform(1e-9, 1.0, 1000):
            v = encode(float(t), POSENC)
            direct = np.empty(62)
            for x in range(31):
                phase = (1.25**x) * math.pi * float(t)
                direct[2 * x] = math.sin(phase)
                direct[2 * x + 1] = math.cos(phase)
            worst = max(worst, float(np.abs(v - direct).max()))
        lo, hi = split(encode(0.5, POSENC), POSENC)
        assert worst <= 1e-9
        assert (lo.shape[0], hi.shape[0]) == (22, 40)
        _report(2, f"encoding max err {worst:.2e}; split lengths (22, 40)")


class TestCriterion3:
    def test_quantizer_error_bound(self):
        rng = np.random.default_rng(2)
        checked = 0
        for bits in (1, 6, 8, 16):
            for _ in range(100):
                t = rng.normal(0, rng.uniform(0.1, 5.0), size=(101,))
                q = quantize(t, bits)
                err = np.abs(dequantize(q).astype(np.float64) - t)
                assert err.max() <= q.scale / 2 + 1e-7, bits
                checked += 1
        _report(3, f"|dequant-orig| <= scale/2 + 1e-7 on {checked} tensors")


class TestCriterion4:
    def test_entropy_coder_round_trip_and_bounds(self):
        rng = np.random.default_rng(3)
        n = 100_000
        streams = {
            "uniform6": (6, rng.integers(0, 64, n)),
            "skew6": (6, np.minimum(rng.exponential(1.5, n).astype(int), 63)),
            "gauss8": (8, np.clip(np.round(rng.normal(128, 12, n)), 0, 255).astype(int)),
            "binary1": (1, (rng.random(n) < 0.02).astype(int)),
            "single6": (6, np.full(n, 17)),
        }
        for name, (bits, syms) in streams.items():
            lengths, payload, nbits = huffman_encode(syms, bits)
            decoded = huffman_decode(lengths, payload, n, nbits)
            assert np.array_equal(decoded, syms), name
            freqs = np.bincount(syms, minlength=1 << bits)
            p = freqs[freqs > 0] / n
            entropy = float(-(p * np.log2(p)).sum())
            assert nbits <= n * bits, name
            assert nbits >= n * entropy - n, name
        # many short independent streams, degenerate ones included
        small = 0
        for trial in range(1000):
            bits = int(rng.integers(1, 9))
            length = int(rng.integers(1, 65))
            syms = rng.integers(0, 1 << bits, length)
            if trial % 7 == 0:
                syms[:] = syms[0]
            lengths, payload, nbits = huffman_encode(syms, bits)
            assert np.array_equal(huffman_decode(lengths, payload, length, nbits), syms)
            small += 1
        _report(
            4,
            f"lossless round trip and payload bounds on {len(streams)} x 1e5-symbol "
            f"streams plus {small} short streams",
        )


@pytest.fixture(scope="module")
def container():
    video = synth_video(
        SynthSpec(num_frames=4, height=16, width=32, hf_texture_period=4, seed=3)
    )
    arch = tiny_arch()
    solution = solve_budget_for_method("dual", 30_000, arch, POSENC)
    model = build_model("dual", solution, arch, POSENC, seed=0)
    model, _ = train(
        model, video, TrainConfig(epochs=5, batch_size=2, seed=0, eval_every=5)
    )
    return encode_video(model, video), video


class TestCriterion5:
    def test_container_round_trip_and_integrity(self, container, tmp_path):
        bs, video = container
        blob = bs.to_bytes()
        back = Bitstream.from_bytes(blob)
        assert back.header == bs.header
        for a, b in zip(bs.embeddings, back.embeddings):
            assert np.array_equal(a.codes, b.codes)
            assert (a.min_val, a.scale) == (b.min_val, b.scale)
        for name in bs.groups:
            for a, b in zip(bs.groups[name], back.groups[name]):
                assert np.array_equal(a.codes, b.codes)

        rng = np.random.default_rng(4)
        detected = 0
        trials = 32
        corrupt = bytearray(blob)
        for _ in range(trials):
            pos = int(rng.integers(len(corrupt)))
            bit = 1 << int(rng.integers(8))
            corrupt[pos] ^= bit
            with pytest.raises(BitstreamError):
                Bitstream.from_bytes(bytes(corrupt))
            detected += 1
            corrupt[pos] ^= bit

        path = tmp_path / "clip.dsvr"
        bs.save(path)
        disk_bits = 8 * path.stat().st_size
        t, h, w = video.num_frames, video.height, video.width
        assert bpp(bs) == disk_bits / (t * h * w)
        _report(
            5,
            f"byte-exact round trip; {detected}/{trials} bit flips detected; "
            f"bpp {bpp(bs):.3f} == on-disk bits / (T*H*W)",
        )


class TestCriterion6:
    def test_budget_solver_all_paper_sizes(self):
        sizes = (300_000, 500_000, 800_000, 1_000_000, 1_500_000, 2_000_000)
        worst_comp = 0.0
        worst_total = 0.0
        slowest = 0.0
        for arch in (desk_arch(), paper_arch()):
            for size in sizes:
                start = time.time()
                sol = solve_budget_for_method("dual", size, arch, POSENC)
                slowest = max(slowest, time.time() - start)
                for plan in sol.plans:
                    rel = abs(plan.realized - plan.target) / plan.target
                    assert rel <= 0.10, (size, plan.name)
                    worst_comp = max(worst_comp, rel)
                rel_total = abs(sol.realized_total - size) / size
                assert rel_total <= 0.05, size
                worst_total = max(worst_total, rel_total)
                assert time.time() - start < 5.0
        _report(
            6,
            f"six sizes x two arches: worst component err {worst_comp:.2%}, "
            f"worst total err {worst_total:.3%}, slowest solve {slowest:.2f}s",
        )


class TestCriterion7:
    def test_gradient_check(self):
        from dsvr.training import _Batcher

        video = synth_video(
            SynthSpec(num_frames=1, height=16, width=32, hf_texture_period=4, seed=3)
        )
        solution = solve_budget_for_method("dual", 30_000, tiny_arch(), POSENC)
        model = build_model("dual", solution, tiny_arch(), POSENC, seed=1)
        model, _ = train(
            model, video, TrainConfig(epochs=3, batch_size=1, seed=1, eval_every=3)
        )
        model = model.double()
        batcher = _Batcher(model, video)
        for attr in ("gt", "enc_input", "gamma_low", "gamma_high"):
            setattr(batcher, attr, getattr(batcher, attr).double())
        idx = torch.arange(1)

        def loss_value():
            return torch.mean((batcher.forward(idx) - batcher.gt[idx]) ** 2)

        params = [p for p in model.parameters() if p.requires_grad]
        grads = torch.autograd.grad(loss_value(), params)
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(10):
            pi = int(rng.integers(len(params)))
            fi = int(rng.integers(params[pi].numel()))
            eps = 1e-5
            with torch.no_grad():
                orig = params[pi].view(-1)[fi].item()
                params[pi].view(-1)[fi] = orig + eps
                up = loss_value().item()
                params[pi].view(-1)[fi] = orig - eps
                down = loss_value().item()
                params[pi].view(-1)[fi] = orig
            fd = (up - down) / (2 * eps)
            ad = grads[pi].view(-1)[fi].item()
            rel = abs(fd - ad) / max(abs(fd), abs(ad), 1e-12)
            assert rel <= 1e-3
            worst = max(worst, rel)
        _report(7, f"autograd vs central differences: worst rel err {worst:.2e}")


class TestCriterion8:
    def test_dual_beats_hybrid_baseline(self, overfit_runs):
        dual = [overfit_runs[("dual", s)][1].final_psnr for s in SEEDS]
        hnerv = [overfit_runs[("hnerv", s)][1].final_psnr for s in SEEDS]
        assert np.mean(dual) > np.mean(hnerv)
        _report(
            8,
            f"dual mean {np.mean(dual):.2f} dB {[round(v, 2) for v in dual]} > "
            f"hybrid mean {np.mean(hnerv):.2f} dB {[round(v, 2) for v in hnerv]} "
            f"at {BUDGET} params, {EPOCHS} epochs",
        )


class TestCriterion9:
    def test_quantization_cost(self, overfit_runs, clip):
        model = overfit_runs[("dual", 0)][0]
        recon = reconstruct_video(model, clip)
        base = np.mean([psnr(recon[i], clip.frames[i]) for i in range(clip.num_frames)])

        coded = decode_video(encode_video(model, clip, bits_embed=6, bits_weights=8))
        p68 = np.mean(
            [psnr(coded.frames[i], clip.frames[i]) for i in range(clip.num_frames)]
        )
        debug = decode_video(encode_video(model, clip, bits_embed=16, bits_weights=16))
        p16 = np.mean(
            [psnr(debug.frames[i], clip.frames[i]) for i in range(clip.num_frames)]
        )
        assert abs(base - p68) <= 0.5
        assert abs(base - p16) <= 0.01
        _report(
            9,
            f"unquantized {base:.3f} dB; 6/8-bit {p68:.3f} dB (d={base - p68:+.3f}); "
            f"16/16-bit {p16:.3f} dB (d={base - p16:+.4f})",
        )


class TestCriterion10:
    def test_high_pass_embeddings_less_redundant(self, overfit_runs, clip):
        dual_cos = []
        hnerv_cos = []
        for seed in SEEDS:
            dm = overfit_runs[("dual", seed)][0]
            hm = overfit_runs[("hnerv", seed)][0]
            dual_cos.append(
                adjacent_cosine_similarity(frame_embeddings(dm, clip.frames)).mean()
            )
            hnerv_cos.append(
                adjacent_cosine_similarity(frame_embeddings(hm, clip.frames)).mean()
            )
        assert np.mean(dual_cos) < np.mean(hnerv_cos)
        _report(
            10,
            f"adjacent-embedding cosine: dual {np.mean(dual_cos):.4f} < "
            f"hybrid {np.mean(hnerv_cos):.4f}",
        )


class TestCriterion11:
    def test_lf_floor_survives_hf_randomization(self, overfit_runs, clip):
        t = clip.num_frames
        gammas = encode_all(t, POSENC)
        lo, hi = split(gammas, POSENC)
        lo_t = torch.from_numpy(lo.astype(np.float32))
        hi_t = torch.from_numpy(hi.astype(np.float32))
        margins = []
        for seed in SEEDS:
            model = copy.deepcopy(overfit_runs[("dual", seed)][0])
            with torch.no_grad():
                lf = model.lf_only(lo_t, hi_t).clamp(0, 1).numpy()
            lf_psnr = np.mean([psnr(lf[i], clip.frames[i]) for i in range(t)])
            randomize_decoder(model.hfd, seed=1000 + seed)
            recon = reconstruct_video(model, clip)
            degraded = np.mean([psnr(recon[i], clip.frames[i]) for i in range(t)])
            assert degraded >= lf_psnr - 0.1, seed
            margins.append(degraded - lf_psnr)
        _report(
            11,
            f"randomized HF decoder vs LF-only floor: min margin "
            f"{min(margins):+.4f} dB (threshold -0.1)",
        )
