"""Canonical length-limited Huffman coding.

Code lengths come from the package-merge algorithm with the length cap at
twice the alphabet bit width, so the payload never exceeds the fixed-width
encoding. Codes are canonical: only the length table is stored; codewords
are reconstructed by (length, symbol) rank. Bits are packed MSB-first
within bytes.
"""

from __future__ import annotations

import numpy as np


class HuffmanError(ValueError):
    pass


def _package_merge(freqs, max_len):
    """Optimal length-limited code lengths (package-merge).

    ``freqs`` are the nonzero frequencies sorted by (frequency, symbol);
    returned lengths align with that order. On weight ties leaves precede
    packages, so tie-breaking reduces to symbol value.
    """
    n = len(freqs)
    if (1 << max_len) < n:
        raise HuffmanError(f"cannot fit {n} symbols in depth {max_len}")
    leaf_w = np.asarray(freqs, dtype=np.int64)
    leaf_idx = np.arange(n, dtype=np.int32)

    level_idx = []  # per level: leaf index of each item, -1 for packages
    prev_w = np.empty(0, dtype=np.int64)
    for _ in range(max_len):
        m = (len(prev_w) // 2) * 2
        pkg_w = prev_w[0:m:2] + prev_w[1:m:2]
        all_w = np.concatenate([leaf_w, pkg_w])
        all_i = np.concatenate([leaf_idx, np.full(len(pkg_w), -1, dtype=np.int32)])
        order = np.argsort(all_w, kind="stable")
        prev_w = all_w[order]
        level_idx.append(all_i[order])

    lengths = np.zeros(n, dtype=np.int64)
    take = 2 * n - 2
    for idx in reversed(level_idx):
        if take > len(idx):
            raise HuffmanError("package-merge underflow; length cap too small")
        sel = idx[:take]
        leaves = sel[sel >= 0]
        lengths[leaves] += 1
        take = 2 * int(len(sel) - len(leaves))
    return lengths


def code_lengths(symbols: np.ndarray, alphabet_bits: int) -> np.ndarray:
    """Per-symbol canonical code lengths (0 for absent symbols)."""
    if not (1 <= alphabet_bits <= 16):
        raise ValueError("alphabet_bits must lie in [1, 16]")
    symbols = np.asarray(symbols)
    if symbols.size == 0:
        raise HuffmanError("cannot build a code for an empty stream")
    size = 1 << alphabet_bits
    if symbols.min() < 0 or symbols.max() >= size:
        raise HuffmanError(f"symbols exceed alphabet of {alphabet_bits} bits")
    freqs = np.bincount(symbols.ravel().astype(np.int64), minlength=size)
    present = np.flatnonzero(freqs)
    lengths = np.zeros(size, dtype=np.uint8)
    if len(present) == 1:
        lengths[present[0]] = 1
        return lengths
    order = np.lexsort((present, freqs[present]))
    sorted_syms = present[order]
    lens = _package_merge(freqs[sorted_syms], 2 * alphabet_bits)
    lengths[sorted_syms] = lens
    return lengths


def canonical_codes(lengths: np.ndarray) -> np.ndarray:
    """Codeword per symbol from the length table, canonical ordering."""
    lengths = np.asarray(lengths)
    codes = np.zeros(lengths.size, dtype=np.uint32)
    order = [
        s for s in np.lexsort((np.arange(lengths.size), lengths)) if lengths[s] > 0
    ]
    code = 0
    prev_len = 0
    for sym in order:
        code <<= int(lengths[sym]) - prev_len
        codes[sym] = code
        code += 1
        prev_len = int(lengths[sym])
    return codes


def kraft_sum(lengths: np.ndarray) -> float:
    lens = np.asarray(lengths, dtype=np.int64)
    return float(np.sum(np.where(lens > 0, 2.0 ** (-lens.astype(np.float64)), 0.0)))


def huffman_encode(symbols: np.ndarray, alphabet_bits: int):
    """Encode a symbol stream. Returns (lengths, payload bytes, bit count)."""
    symbols = np.asarray(symbols).ravel()
    lengths = code_lengths(symbols, alphabet_bits)
    payload, nbits = encode_with_table(symbols, lengths)
    return lengths, payload, nbits


def encode_with_table(symbols: np.ndarray, lengths: np.ndarray):
    symbols = np.asarray(symbols).ravel().astype(np.int64)
    codes = canonical_codes(lengths)
    lens = np.asarray(lengths, dtype=np.int64)[symbols]
    if (lens == 0).any():
        raise HuffmanError("stream contains a symbol absent from the table")
    cws = codes[symbols]
    total = int(lens.sum())
    ends = np.cumsum(lens)
    starts = ends - lens
    bits = np.zeros(total, dtype=np.uint8)
    for b in range(int(lens.max())):
        sel = lens > b
        bits[starts[sel] + b] = (cws[sel] >> (lens[sel] - 1 - b)).astype(np.uint8) & 1
    return np.packbits(bits).tobytes(), total


def huffman_decode(
    lengths: np.ndarray, payload: bytes, count: int, payload_bits=None
) -> np.ndarray:
    """Decode ``count`` symbols from an MSB-first packed payload."""
    lengths = np.asarray(lengths, dtype=np.int64)
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return np.empty(0, dtype=np.int64)
    ks = kraft_sum(lengths)
    if ks > 1.0 + 1e-12:
        raise HuffmanError(f"malformed table: Kraft sum {ks} exceeds 1")
    max_len = int(lengths.max())
    if max_len == 0:
        raise HuffmanError("empty code table")

    # canonical decode tables: first code / first rank per length
    present = np.flatnonzero(lengths)
    order = sorted(present, key=lambda s: (lengths[s], s))
    syms_by_rank = np.array(order, dtype=np.int64)
    first_code = np.zeros(max_len + 2, dtype=np.int64)
    first_rank = np.zeros(max_len + 2, dtype=np.int64)
    count_at = np.zeros(max_len + 2, dtype=np.int64)
    for s in order:
        count_at[lengths[s]] += 1
    code = 0
    rank = 0
    for l in range(1, max_len + 1):
        first_code[l] = code
        first_rank[l] = rank
        code = (code + count_at[l]) << 1
        rank += count_at[l]

    if payload_bits is None:
        payload_bits = 8 * len(payload)
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))[:payload_bits]
    bit_list = bits.tolist()
    out = np.empty(count, dtype=np.int64)
    pos = 0
    nbits = len(bit_list)
    fc = first_code.tolist()
    fr = first_rank.tolist()
    ca = count_at.tolist()
    for i in range(count):
        code = 0
        l = 0
        while True:
            if pos >= nbits:
                raise HuffmanError(
                    f"truncated payload: decoded {i} of {count} symbols"
                )
            code = (code << 1) | bit_list[pos]
            pos += 1
            l += 1
            if l > max_len:
                raise HuffmanError("invalid payload: no matching codeword")
            offset = code - fc[l]
            if 0 <= offset < ca[l]:
                out[i] = syms_by_rank[fr[l] + offset]
                break
    return out
