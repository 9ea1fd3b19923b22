"""Self-describing bitstream container and standalone video decoding.

Layout (little-endian, CRC-32 trailer over everything before it):

    magic "DSVR" | version u8 | header_len u32 | header JSON (canonical)
    embeddings section | one section per decoder group | crc u32

Each section:

    n_tensors u32
    per tensor: bits u8 | min f32 | scale f32 | ndim u8 | dims u32 * ndim
    table_size u32 | code-length table (u8 per symbol)
    payload_bits u64 | payload bytes

All tensors of a section share one Huffman table built over their
concatenated codes. ``bits == 32`` marks an uncoded float32 passthrough
(used by checkpoints); such sections carry raw data in the payload and no
table. The encoder is never part of a transmitted bitstream, only of
checkpoints.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from .huffman import encode_with_table, code_lengths, huffman_decode
from .models import (
    ArchConfig,
    ConvDecoder,
    DualStreamModel,
    Encoder,
    HNeRVModel,
    MlpDecoder,
    NeRVModel,
    frame_embeddings,
)
from .posenc import PosEncConfig, encode_all, split
from .quant import QuantTensor, dequantize, quantize
from .video import VideoTensor

MAGIC = b"DSVR"
VERSION = 1
RAW_BITS = 32


class BitstreamError(ValueError):
    pass


@dataclass
class Bitstream:
    header: dict
    embeddings: list  # QuantTensor per frame (may be empty)
    groups: dict  # name -> list of QuantTensor, insertion-ordered

    _cached_bytes: Optional[bytes] = field(default=None, repr=False, compare=False)

    def to_bytes(self) -> bytes:
        if self._cached_bytes is None:
            self._cached_bytes = _write_container(self)
        return self._cached_bytes

    @staticmethod
    def from_bytes(data: bytes) -> "Bitstream":
        return _read_container(data)

    def save(self, path) -> int:
        blob = self.to_bytes()
        with open(path, "wb") as f:
            f.write(blob)
        return len(blob)

    @staticmethod
    def load(path) -> "Bitstream":
        with open(path, "rb") as f:
            return Bitstream.from_bytes(f.read())

    @property
    def total_bits(self) -> int:
        return 8 * len(self.to_bytes())


def _tensor_meta(q: QuantTensor) -> bytes:
    out = struct.pack("<Bff B", q.bits, q.min_val, q.scale, len(q.shape))
    return out + struct.pack(f"<{len(q.shape)}I", *q.shape)


def _write_section(buf: bytearray, entries: list, alphabet_bits: int) -> None:
    buf += struct.pack("<I", len(entries))
    if not entries:
        buf += struct.pack("<I", 0)
        buf += struct.pack("<Q", 0)
        return
    raw = entries[0].bits == RAW_BITS
    for q in entries:
        buf += _tensor_meta(q)
    if raw:
        data = np.concatenate([q.codes for q in entries]).astype("<f4")
        buf += struct.pack("<I", 0)
        buf += struct.pack("<Q", 8 * data.nbytes)
        buf += data.tobytes()
        return
    codes = np.concatenate([q.codes for q in entries])
    table = code_lengths(codes, alphabet_bits)
    payload, nbits = encode_with_table(codes, table)
    buf += struct.pack("<I", table.size)
    buf += table.astype(np.uint8).tobytes()
    buf += struct.pack("<Q", nbits)
    buf += payload


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise BitstreamError("container truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_section(r: _Reader) -> list:
    (n_tensors,) = r.unpack("<I")
    metas = []
    for _ in range(n_tensors):
        bits, min_val, scale, ndim = r.unpack("<Bff B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        metas.append((bits, min_val, scale, tuple(shape)))
    (table_size,) = r.unpack("<I")
    table = np.frombuffer(r.take(table_size), dtype=np.uint8)
    (payload_bits,) = r.unpack("<Q")
    if not metas:
        return []
    raw = metas[0][0] == RAW_BITS
    entries = []
    if raw:
        data = np.frombuffer(r.take(payload_bits // 8), dtype="<f4")
        offset = 0
        for bits, min_val, scale, shape in metas:
            numel = int(np.prod(shape)) if shape else 1
            entries.append(
                QuantTensor(
                    shape=shape,
                    bits=bits,
                    min_val=min_val,
                    scale=scale,
                    codes=data[offset : offset + numel].copy(),
                )
            )
            offset += numel
        return entries
    payload = r.take((payload_bits + 7) // 8)
    total = sum(int(np.prod(s)) if s else 1 for _, _, _, s in metas)
    codes = huffman_decode(table, payload, total, payload_bits).astype(np.uint16)
    offset = 0
    for bits, min_val, scale, shape in metas:
        numel = int(np.prod(shape)) if shape else 1
        entries.append(
            QuantTensor(
                shape=shape,
                bits=bits,
                min_val=min_val,
                scale=scale,
                codes=codes[offset : offset + numel].copy(),
            )
        )
        offset += numel
    return entries


def _write_container(bs: Bitstream) -> bytes:
    header_json = json.dumps(bs.header, sort_keys=True, separators=(",", ":")).encode()
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<B", VERSION)
    buf += struct.pack("<I", len(header_json))
    buf += header_json
    _write_section(buf, bs.embeddings, bs.header["bits_embed"])
    for name in bs.header["groups"]:
        bits = bs.header["bits_weights"]
        _write_section(buf, bs.groups[name], bits)
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    return bytes(buf)


def _read_container(data: bytes) -> Bitstream:
    if len(data) < 13:
        raise BitstreamError("container too short")
    if data[:4] != MAGIC:
        raise BitstreamError(f"bad magic {data[:4]!r}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise BitstreamError("checksum mismatch: container corrupted")
    r = _Reader(body)
    r.take(4)
    (version,) = r.unpack("<B")
    if version != VERSION:
        raise BitstreamError(f"unsupported container version {version}")
    (hlen,) = r.unpack("<I")
    header = json.loads(r.take(hlen).decode())
    embeddings = _read_section(r)
    groups = {}
    for name in header["groups"]:
        groups[name] = _read_section(r)
    if r.pos != len(body):
        raise BitstreamError("trailing bytes after final section")
    bs = Bitstream(header=header, embeddings=embeddings, groups=groups)
    bs._cached_bytes = bytes(data)
    return bs


def _decoder_spec(module) -> dict:
    if isinstance(module, ConvDecoder):
        in_ch = module.blocks[0].conv.in_channels
        return {"kind": "conv", "input_dim": in_ch, "widths": list(module.widths)}
    if isinstance(module, MlpDecoder):
        return {
            "kind": "mlp",
            "input_dim": module.input_dim,
            "widths": list(module.widths),
            "mlp_hidden": module.mlp_hidden,
        }
    raise TypeError(f"cannot describe {type(module).__name__}")


def _component_tensors(module) -> list:
    return [
        (k, v.detach().numpy().astype(np.float32))
        for k, v in module.state_dict().items()
    ]


def build_header(
    model,
    video_shape: tuple,
    bits_embed: int = 6,
    bits_weights: int = 8,
    name: str = "",
    fps: Optional[float] = None,
    include_encoder: bool = False,
) -> dict:
    t, h, w = video_shape
    arch = model.arch
    header = {
        "method": model.method,
        "video": {"num_frames": t, "height": h, "width": w, "fps": fps, "name": name},
        "arch": {
            "embed_shape": list(arch.embed_shape),
            "strides": list(arch.strides),
            "reduction": arch.reduction,
            "enc_width": arch.enc_width,
            "enc_expansion": arch.enc_expansion,
        },
        "bits_embed": bits_embed,
        "bits_weights": bits_weights,
        "decoders": {},
        "groups": list(model.transmitted_components()),
    }
    if hasattr(model, "posenc_cfg"):
        cfg = model.posenc_cfg
        header["posenc"] = {"base": cfg.base, "split": cfg.split, "levels": cfg.levels}
    if isinstance(model, DualStreamModel):
        header["keep_ratio"] = model.keep_ratio
    for comp in model.transmitted_components():
        header["decoders"][comp] = _decoder_spec(getattr(model, comp))
    if include_encoder:
        header["groups"] = header["groups"] + ["encoder"]
        header["decoders"]["encoder"] = {"kind": "encoder"}
    return header


def serialize(
    model,
    embeddings: Optional[np.ndarray],
    video_shape: tuple,
    bits_embed: int = 6,
    bits_weights: int = 8,
    name: str = "",
    fps: Optional[float] = None,
    include_encoder: bool = False,
) -> Bitstream:
    """Quantize embeddings and decoder weights into a container.

    ``embeddings`` is the (T, c, h, w) array from the model's encoder, or
    None for index-only models. ``include_encoder`` switches to checkpoint
    mode: the encoder weights join the container and nothing is quantized
    (32-bit passthrough).
    """
    header = build_header(
        model, video_shape, bits_embed, bits_weights, name, fps, include_encoder
    )
    emb_entries = []
    if embeddings is not None:
        for i in range(embeddings.shape[0]):
            if include_encoder:
                emb_entries.append(_raw_entry(embeddings[i]))
            else:
                emb_entries.append(quantize(embeddings[i], bits_embed))
    groups = {}
    for comp in header["groups"]:
        entries = []
        for _, arr in _component_tensors(getattr(model, comp)):
            if include_encoder:
                entries.append(_raw_entry(arr))
            else:
                entries.append(quantize(arr, bits_weights))
        groups[comp] = entries
    return Bitstream(header=header, embeddings=emb_entries, groups=groups)


def _raw_entry(arr: np.ndarray) -> QuantTensor:
    return QuantTensor(
        shape=tuple(arr.shape),
        bits=RAW_BITS,
        min_val=0.0,
        scale=0.0,
        codes=np.asarray(arr, dtype=np.float32).ravel(),
    )


def _entry_values(q: QuantTensor) -> np.ndarray:
    if q.bits == RAW_BITS:
        return q.codes.reshape(q.shape).astype(np.float32)
    return dequantize(q)


def deserialize(bs: Bitstream):
    """Rebuild (decoders, embeddings, header) from a container.

    Decoder modules come back with dequantized weights loaded; embeddings
    as a (T, c, h, w) float32 array (or None).
    """
    header = bs.header
    arch = _arch_from_header(header)
    decoders = {}
    for comp in header["groups"]:
        module = _build_component(header["decoders"][comp], arch)
        _load_component(module, bs.groups[comp], comp)
        decoders[comp] = module
    embeddings = None
    if bs.embeddings:
        embeddings = np.stack([_entry_values(q) for q in bs.embeddings])
    return decoders, embeddings, header


def _arch_from_header(header: dict) -> ArchConfig:
    a = header["arch"]
    return ArchConfig(
        embed_shape=tuple(a["embed_shape"]),
        strides=tuple(a["strides"]),
        reduction=a["reduction"],
        enc_width=a["enc_width"],
        enc_expansion=a["enc_expansion"],
    )


def _posenc_from_header(header: dict) -> PosEncConfig:
    p = header["posenc"]
    return PosEncConfig(base=p["base"], split=p["split"], levels=p["levels"])


def _build_component(spec: dict, arch: ArchConfig):
    if spec["kind"] == "conv":
        return ConvDecoder(spec["input_dim"], spec["widths"], arch.strides)
    if spec["kind"] == "mlp":
        return MlpDecoder(
            spec["input_dim"],
            spec["mlp_hidden"],
            spec["widths"],
            arch.strides,
            arch.embed_shape[1:],
        )
    if spec["kind"] == "encoder":
        return Encoder(arch)
    raise BitstreamError(f"unknown component kind {spec['kind']!r}")


def _load_component(module, entries: list, name: str) -> None:
    state = module.state_dict()
    if len(state) != len(entries):
        raise BitstreamError(
            f"{name}: expected {len(state)} tensors, container has {len(entries)}"
        )
    new_state = {}
    for (key, param), q in zip(state.items(), entries):
        vals = _entry_values(q)
        if tuple(param.shape) != tuple(vals.shape):
            raise BitstreamError(
                f"{name}.{key}: shape {tuple(vals.shape)} does not match "
                f"{tuple(param.shape)}"
            )
        new_state[key] = torch.from_numpy(vals)
    module.load_state_dict(new_state)
    module.eval()


def decode_video(bs: Bitstream, batch_size: int = 8) -> VideoTensor:
    """Reconstruct the video from the container alone (no source access)."""
    decoders, embeddings, header = deserialize(bs)
    method = header["method"]
    t = header["video"]["num_frames"]
    outs = []
    with torch.no_grad():
        if method == "nerv":
            cfg = _posenc_from_header(header)
            g = torch.from_numpy(encode_all(t, cfg).astype(np.float32))
            for s in range(0, t, batch_size):
                outs.append(decoders["decoder"](g[s : s + batch_size]))
        elif method == "hnerv":
            emb = torch.from_numpy(embeddings)
            for s in range(0, t, batch_size):
                outs.append(decoders["decoder"](emb[s : s + batch_size]))
        elif method == "dual":
            cfg = _posenc_from_header(header)
            lo, hi = split(encode_all(t, cfg), cfg)
            lo = torch.from_numpy(lo.astype(np.float32))
            hi = torch.from_numpy(hi.astype(np.float32))
            emb = torch.from_numpy(embeddings)
            for s in range(0, t, batch_size):
                hf = decoders["hfd"](emb[s : s + batch_size])
                lf = decoders["lfd1"](lo[s : s + batch_size]) + decoders["lfd2"](
                    hi[s : s + batch_size]
                )
                outs.append(hf + lf)
        else:
            raise BitstreamError(f"unknown method {method!r}")
    frames = torch.cat(outs).clamp(0.0, 1.0).numpy()
    return VideoTensor(frames=frames, name=header["video"]["name"])


def bpp(bs: Bitstream, video_dims: Optional[tuple] = None) -> float:
    """Total container bits per source pixel."""
    if video_dims is None:
        v = bs.header["video"]
        video_dims = (v["num_frames"], v["height"], v["width"])
    t, h, w = video_dims
    return bs.total_bits / float(t * h * w)


def encode_video(
    model,
    video: VideoTensor,
    bits_embed: int = 6,
    bits_weights: int = 8,
) -> Bitstream:
    """Serialize a trained model against its video (embeddings included)."""
    if isinstance(model, NeRVModel):
        embeddings = None
    else:
        embeddings = frame_embeddings(model, video.frames)
    return serialize(
        model,
        embeddings,
        (video.num_frames, video.height, video.width),
        bits_embed=bits_embed,
        bits_weights=bits_weights,
        name=video.name,
        fps=video.fps,
    )


def save_checkpoint(model, video_shape: tuple, path) -> None:
    """Full-precision container (32-bit passthrough) including the encoder."""
    bs = serialize(model, None, video_shape, include_encoder=True)
    bs.save(path)


def load_checkpoint(path):
    """Rebuild the full model from a checkpoint container."""
    bs = Bitstream.load(path)
    header = bs.header
    arch = _arch_from_header(header)
    method = header["method"]
    if method == "dual":
        cfg = _posenc_from_header(header)
        d = header["decoders"]
        model = DualStreamModel(
            arch,
            cfg,
            header["keep_ratio"],
            hfd_widths=d["hfd"]["widths"],
            lfd1_widths=d["lfd1"]["widths"],
            lfd1_hidden=d["lfd1"]["mlp_hidden"],
            lfd2_widths=d["lfd2"]["widths"],
            lfd2_hidden=d["lfd2"]["mlp_hidden"],
        )
    elif method == "nerv":
        cfg = _posenc_from_header(header)
        d = header["decoders"]["decoder"]
        model = NeRVModel(arch, cfg, d["widths"], d["mlp_hidden"])
    elif method == "hnerv":
        d = header["decoders"]["decoder"]
        model = HNeRVModel(arch, d["widths"])
    else:
        raise BitstreamError(f"unknown method {method!r}")
    for comp in header["groups"]:
        _load_component(getattr(model, comp), bs.groups[comp], comp)
    model.eval()
    return model, header
