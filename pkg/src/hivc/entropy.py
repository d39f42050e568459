"""Symbol coding back-end: JPEG-style categories plus a tANS entropy coder.

Quantized integers are split into a category (the bit length of the
magnitude) and raw extra bits giving sign and offset, following the
JPEG convention where a negative value v is stored as v + 2^k - 1 in k
bits. Category symbols are entropy coded with a lightweight tabled
asymmetric-numeral-system coder (the scheme behind Finite State
Entropy): a normalized histogram spread over a power-of-two state
table; encoding walks the table backwards emitting state bits, decoding
walks forward. Extra bits are appended raw after the coded stream.

Payload layout (see also the container format notes in the README):
  [table_log: 1 byte][alphabet size + normalized counts: varints]
  [symbol count: u32][final state: u16][FSE bit length: u32][FSE bits]
  [extra-bits length: u32][extra bits]
"""

from __future__ import annotations

import struct

import numpy as np

from hivc.bits import BitReader, BitWriter, TruncatedStream, read_uvarint, write_uvarint

MAX_MAGNITUDE = (1 << 15) - 1
DEFAULT_TABLE_LOG = 10
MAX_STREAM_SYMBOLS = 1 << 28  # corrupt-count guard; far above any real payload


class EntropyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Category layer
# ---------------------------------------------------------------------------


def to_category(v: int):
    """(category, extra_bits_value) of a signed integer; bijective."""
    if abs(v) > MAX_MAGNITUDE:
        raise EntropyError(f"magnitude overflow: {v}")
    if v == 0:
        return 0, 0
    k = int(abs(v)).bit_length()
    if v > 0:
        return k, v
    return k, v + (1 << k) - 1


def from_category(category: int, extra: int) -> int:
    if category == 0:
        return 0
    if category > 16:
        raise EntropyError(f"bad category {category}")
    half = 1 << (category - 1)
    if extra >= half:
        return extra
    return extra - (1 << category) + 1


# ---------------------------------------------------------------------------
# tANS tables
# ---------------------------------------------------------------------------


def normalize_counts(histogram, table_log: int) -> np.ndarray:
    """Scale a histogram to sum to 2^table_log, every present symbol >= 1.

    Largest-remainder rounding with ties broken by symbol index; if the
    guaranteed minimum counts overshoot the table, the largest counts
    are decremented first (smallest index on ties).
    """
    if not 5 <= table_log <= 12:
        raise EntropyError("table_log out of range [5, 12]")
    hist = np.asarray(histogram, dtype=np.float64)
    if hist.ndim != 1 or hist.size == 0 or (hist < 0).any():
        raise EntropyError("bad histogram")
    total = hist.sum()
    if total <= 0:
        raise EntropyError("histogram has no counts")
    size = 1 << table_log
    if int((hist > 0).sum()) > size:
        raise EntropyError("alphabet larger than table")
    ideal = hist / total * size
    norm = np.floor(ideal).astype(np.int64)
    norm[(hist > 0) & (norm == 0)] = 1
    diff = size - int(norm.sum())
    if diff > 0:
        remainder = ideal - np.floor(ideal)
        order = np.lexsort((np.arange(hist.size), -remainder))
        i = 0
        while diff > 0:
            s = order[i % hist.size]
            if hist[s] > 0:
                norm[s] += 1
                diff -= 1
            i += 1
    while diff < 0:
        candidates = np.flatnonzero(norm > 1)
        s = candidates[np.argmax(norm[candidates])]
        norm[s] -= 1
        diff += 1
    return norm


class FseTable:
    """Encode/decode state tables for one normalized symbol distribution."""

    def __init__(self, norm_counts, table_log: int):
        self.table_log = table_log
        self.counts = np.asarray(norm_counts, dtype=np.int64)
        size = 1 << table_log
        if int(self.counts.sum()) != size:
            raise EntropyError("normalized counts must sum to table size")
        step = (size >> 1) + (size >> 3) + 3
        slots = (np.arange(size, dtype=np.int64) * step) & (size - 1)
        spread = np.empty(size, dtype=np.int64)
        spread[slots] = np.repeat(np.arange(self.counts.size), self.counts)
        # decode tables: slot -> (symbol, counter x, bit count); x counts
        # the occurrences of the slot's symbol in slot order, offset by
        # the symbol's normalized count
        self.decode_sym = spread
        order = np.argsort(spread, kind="stable")
        group_starts = np.repeat(np.cumsum(self.counts) - self.counts, self.counts)
        occurrence = np.arange(size, dtype=np.int64) - group_starts
        self.decode_x = np.empty(size, dtype=np.int64)
        self.decode_x[order] = np.repeat(self.counts, self.counts) + occurrence
        self.decode_nb = (table_log + 1) - np.frexp(self.decode_x)[1]
        self._slot_of = None

    @property
    def slot_of(self):
        """(symbol, x) -> slot lookup; built on demand, encoders only."""
        if self._slot_of is None:
            self._slot_of = {
                (int(s), int(x)): i
                for i, (s, x) in enumerate(zip(self.decode_sym, self.decode_x))
            }
        return self._slot_of


def fse_build_table(histogram, table_log: int = DEFAULT_TABLE_LOG) -> FseTable:
    return FseTable(normalize_counts(histogram, table_log), table_log)


def fse_encode(symbols, table: FseTable):
    """Encode a symbol sequence; returns (bit chunks as BitWriter, final state).

    Symbols are processed in reverse so the decoder emits them forward;
    per-symbol bit chunks are therefore written in reverse order too.
    """
    size = 1 << table.table_log
    counts = table.counts
    state = size
    chunks = []
    for s in reversed(symbols):
        c = int(counts[s])
        if c == 0:
            raise EntropyError(f"symbol {s} absent from table")
        nb = state.bit_length() - c.bit_length()
        if (state >> nb) >= 2 * c:
            nb += 1
        elif nb > 0 and (state >> nb) < c:
            nb -= 1
        chunks.append((state & ((1 << nb) - 1), nb))
        state = size + table.slot_of[(s, state >> nb)]
    writer = BitWriter()
    for value, nb in reversed(chunks):
        writer.write_bits(value, nb)
    return writer, state


def fse_decode(reader: BitReader, state: int, count: int, table: FseTable):
    """Decode `count` symbols starting from the stored final encoder state."""
    size = 1 << table.table_log
    if not size <= state < 2 * size:
        raise EntropyError("corrupt stream: initial state out of range")
    sym = table.decode_sym.tolist()
    xs = table.decode_x.tolist()
    nbs = table.decode_nb.tolist()
    out = [0] * count
    # the bit reader is inlined here; this loop dominates decode time
    data = reader._data
    acc, have, b = reader._acc, reader._have, reader._byte
    pos, limit = reader._pos, reader._limit
    try:
        for i in range(count):
            slot = state - size
            out[i] = sym[slot]
            nb = nbs[slot]
            if nb:
                pos += nb
                if pos > limit:
                    raise TruncatedStream("bit stream exhausted")
                while have < nb:
                    acc = (acc << 8) | data[b]
                    b += 1
                    have += 8
                have -= nb
                state = (xs[slot] << nb) | (acc >> have)
                acc &= (1 << have) - 1
            else:
                state = xs[slot]
    finally:
        reader._acc, reader._have, reader._byte = acc, have, b
        reader._pos = pos
    if state != size:
        raise EntropyError("corrupt stream: final state mismatch")
    return np.asarray(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# Self-contained payloads
# ---------------------------------------------------------------------------


def _encode_header(counts: np.ndarray, table_log: int) -> bytearray:
    out = bytearray([table_log])
    write_uvarint(out, counts.size)
    for c in counts:
        write_uvarint(out, int(c))
    return out


def _decode_header(data: bytes, pos: int):
    if pos >= len(data):
        raise TruncatedStream("entropy payload truncated")
    table_log = data[pos]
    pos += 1
    if not 5 <= table_log <= 12:
        raise EntropyError(f"bad table_log {table_log}")
    nsym, pos = read_uvarint(data, pos)
    if nsym == 0 or nsym > (1 << table_log):
        raise EntropyError("bad alphabet size")
    counts = np.empty(nsym, dtype=np.int64)
    for i in range(nsym):
        counts[i], pos = read_uvarint(data, pos)
    return counts, table_log, pos


def _auto_table_log(alphabet: int, n: int) -> int:
    """Small streams get small tables (header cost), long skewed streams
    get larger ones (precision). Table must still fit the alphabet."""
    need = max(1, (alphabet - 1).bit_length()) if alphabet > 1 else 1
    tl = max(5, need + 1)
    if n >= 4096:
        tl = max(tl, 10)
    if n >= 65536:
        tl = max(tl, 11)
    return min(tl, 12)


def encode_symbols(symbols, table_log: int | None = None) -> bytes:
    """Self-contained FSE payload of a nonnegative integer symbol stream."""
    symbols = np.asarray(symbols, dtype=np.int64)
    if symbols.size and symbols.min() < 0:
        raise EntropyError("symbols must be nonnegative")
    hist = np.bincount(symbols) if symbols.size else np.array([1])
    if table_log is None:
        table_log = _auto_table_log(hist.size, symbols.size)
    counts = normalize_counts(hist, table_log)
    if symbols.size:
        table = FseTable(counts, table_log)
        writer, state = fse_encode(symbols, table)
    else:
        writer, state = BitWriter(), 1 << table_log
    fse_bits = writer.getvalue()
    out = _encode_header(counts, table_log)
    out += struct.pack("<IHI", symbols.size, state, len(writer))
    out += fse_bits
    return bytes(out)


def decode_symbols(data: bytes, pos: int = 0):
    """Inverse of encode_symbols; returns (symbols, next position)."""
    counts, table_log, pos = _decode_header(data, pos)
    if pos + 10 > len(data):
        raise TruncatedStream("entropy payload truncated")
    count, state, bit_len = struct.unpack_from("<IHI", data, pos)
    pos += 10
    if count > MAX_STREAM_SYMBOLS:
        raise EntropyError(f"implausible symbol count {count}")
    nbytes = (bit_len + 7) // 8
    if pos + nbytes > len(data):
        raise TruncatedStream("entropy payload truncated")
    table = FseTable(counts, table_log)
    reader = BitReader(data[pos : pos + nbytes], bit_len)
    symbols = fse_decode(reader, state, count, table) if count else np.empty(0, dtype=np.int64)
    return symbols, pos + nbytes


def encode_signed_values(values, table_log: int | None = None) -> bytes:
    """Category + extra-bits + FSE payload for signed integer streams."""
    values = np.asarray(values, dtype=np.int64)
    cats = []
    extra = BitWriter()
    for v in values:
        k, bits = to_category(int(v))
        cats.append(k)
        if k:
            extra.write_bits(bits, k)
    payload = bytearray(encode_symbols(cats, table_log))
    extra_bytes = extra.getvalue()
    payload += struct.pack("<I", len(extra))
    payload += extra_bytes
    return bytes(payload)


def decode_signed_values(data: bytes, pos: int = 0):
    """Inverse of encode_signed_values; returns (values, next position)."""
    cats, pos = decode_symbols(data, pos)
    if pos + 4 > len(data):
        raise TruncatedStream("entropy payload truncated")
    (bit_len,) = struct.unpack_from("<I", data, pos)
    pos += 4
    nbytes = (bit_len + 7) // 8
    if pos + nbytes > len(data):
        raise TruncatedStream("entropy payload truncated")
    if np.any(cats > 16):
        raise EntropyError("bad category in stream")
    if int(cats.sum()) != bit_len:
        raise EntropyError("extra-bits length mismatch")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, count=nbytes, offset=pos))
    bits = bits[:bit_len].astype(np.int64)
    ends = np.cumsum(cats)
    starts = ends - cats
    values = np.zeros(cats.size, dtype=np.int64)
    for k in np.unique(cats):
        k = int(k)
        if k == 0:
            continue
        sel = np.flatnonzero(cats == k)
        extra = bits[starts[sel][:, None] + np.arange(k)] @ (1 << np.arange(k - 1, -1, -1))
        half = 1 << (k - 1)
        values[sel] = np.where(extra >= half, extra, extra - (1 << k) + 1)
    return values, pos + nbytes
