"""Lossless LZ77-family compression over quantized action sequences.

Greedy longest-match tokenization over a sliding window. Tokens are
(distance, length, literal) triples: a back-reference of ``length`` bytes
starting ``distance`` bytes back, followed by one literal byte. Matches
shorter than ``min_match`` are emitted as plain literals (distance=0,
length=0). A match that runs flush to the end of the data carries no
trailing literal (there is no next symbol); that is the only token whose
``literal`` is None.

Byte accounting is fixed: a match token costs 1 (literal) + 2 (distance)
+ 1 (length) = 4 bytes, a literal-only token costs 1 + 1 flag byte = 2,
and the flush-ending match costs 3 (no literal byte). Only relative
lengths matter downstream; the trade-off weight absorbs constants.

All functions are pure; the numba kernels below are the single
implementation of the scan (token emission and byte counting share one
code path).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numba import njit

from .errors import ConfigError, CorruptStreamError, InputDomainError

DEFAULT_WINDOW = 4096
DEFAULT_BUFFER = 64
DEFAULT_MIN_MATCH = 4
DEFAULT_GRANULARITY = 100

MATCH_TOKEN_BYTES = 4
FLUSH_MATCH_TOKEN_BYTES = 3
LITERAL_TOKEN_BYTES = 2

_HASH_BITS = 15
_HASH_SIZE = 1 << _HASH_BITS


@dataclass(frozen=True)
class QuantizedSequence:
    """Flat signed-integer view of an action sequence, dimension-major per step."""

    values: np.ndarray
    granularity: int

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.int64))


class Token(NamedTuple):
    distance: int
    length: int
    literal: Optional[int]


@dataclass(frozen=True)
class EncodedSequence:
    tokens: tuple[Token, ...]
    window_size: int = DEFAULT_WINDOW
    buffer_size: int = DEFAULT_BUFFER

    @property
    def n_bytes(self) -> int:
        total = 0
        for tok in self.tokens:
            if tok.length > 0:
                total += MATCH_TOKEN_BYTES if tok.literal is not None else FLUSH_MATCH_TOKEN_BYTES
            else:
                total += LITERAL_TOKEN_BYTES
        return total


def quantize(seq, granularity: int = DEFAULT_GRANULARITY) -> QuantizedSequence:
    """Map components in [-1, 1] to floor(a * granularity)."""
    if granularity < 1:
        raise ConfigError(f"granularity must be >= 1, got {granularity}")
    arr = np.asarray(seq, dtype=np.float64)
    if arr.size and (np.abs(arr) > 1.0).any():
        bad = float(arr.flat[int(np.argmax(np.abs(arr)))])
        raise InputDomainError(f"action component {bad} outside [-1, 1]")
    values = np.floor(arr.reshape(-1) * granularity).astype(np.int64)
    return QuantizedSequence(values=values, granularity=int(granularity))


def serialize(q: QuantizedSequence) -> bytes:
    """Offset-encode each value into one byte: v -> v + granularity."""
    if q.granularity > 127:
        raise ConfigError(
            f"granularity {q.granularity} > 127 cannot be serialized into single bytes"
        )
    if q.values.size and (
        q.values.min() < -q.granularity or q.values.max() > q.granularity
    ):
        raise InputDomainError("quantized values outside [-granularity, granularity]")
    return (q.values + q.granularity).astype(np.uint8).tobytes()


def _as_u8(data) -> np.ndarray:
    if isinstance(data, (bytes, bytearray)):
        return np.frombuffer(bytes(data), dtype=np.uint8)
    arr = np.asarray(data)
    if arr.dtype != np.uint8:
        raise InputDomainError(f"expected bytes or uint8 array, got dtype {arr.dtype}")
    return np.ascontiguousarray(arr)


def _check_params(window_size: int, buffer_size: int, min_match: int):
    if window_size < 1:
        raise ConfigError(f"window_size must be >= 1, got {window_size}")
    if buffer_size < 1:
        raise ConfigError(f"buffer_size must be >= 1, got {buffer_size}")
    if min_match < 1:
        raise ConfigError(f"min_match must be >= 1, got {min_match}")


@njit(cache=True)
def _scan(data, window_size, buffer_size, min_match, emit):  # pragma: no cover - jitted
    """Greedy longest-match scan.

    Returns (token_count, total_cost_bytes, dists, lens, lits); the three
    arrays are filled only when emit is True. lits uses -1 for "absent"
    (flush-ending match).
    """
    n = data.shape[0]
    cap = n if emit else 1
    dists = np.empty(cap, dtype=np.int64)
    lens = np.empty(cap, dtype=np.int64)
    lits = np.empty(cap, dtype=np.int64)

    use_hash = min_match >= 4
    head = np.full(_HASH_SIZE, -1, dtype=np.int64)
    prev = np.empty(0, dtype=np.int64)
    if use_hash:
        prev = np.full(n, -1, dtype=np.int64)

    count = 0
    total = 0
    t = 0
    inserted = 0
    while t < n:
        remaining = n - t
        max_len = buffer_size if buffer_size < remaining else remaining
        best_len = 0
        best_dist = 0
        lo = t - window_size
        if lo < 0:
            lo = 0
        if max_len >= min_match:
            if use_hash:
                while inserted + 3 < n and inserted < t:
                    h = (
                        np.int64(data[inserted])
                        | (np.int64(data[inserted + 1]) << 8)
                        | (np.int64(data[inserted + 2]) << 16)
                        | (np.int64(data[inserted + 3]) << 24)
                    )
                    h = ((h * np.int64(2654435761)) >> (32 - _HASH_BITS)) & (_HASH_SIZE - 1)
                    prev[inserted] = head[h]
                    head[h] = inserted
                    inserted += 1
                if t + 4 <= n:
                    h = (
                        np.int64(data[t])
                        | (np.int64(data[t + 1]) << 8)
                        | (np.int64(data[t + 2]) << 16)
                        | (np.int64(data[t + 3]) << 24)
                    )
                    h = ((h * np.int64(2654435761)) >> (32 - _HASH_BITS)) & (_HASH_SIZE - 1)
                    cand = head[h]
                    while cand >= lo:
                        l = 0
                        while l < max_len and data[cand + l] == data[t + l]:
                            l += 1
                        if l > best_len:
                            best_len = l
                            best_dist = t - cand
                            if l == max_len:
                                break
                        cand = prev[cand]
            else:
                cand = t - 1
                while cand >= lo:
                    l = 0
                    while l < max_len and data[cand + l] == data[t + l]:
                        l += 1
                    if l > best_len:
                        best_len = l
                        best_dist = t - cand
                        if l == max_len:
                            break
                    cand -= 1

        if best_len >= min_match:
            flush = t + best_len == n
            if emit:
                dists[count] = best_dist
                lens[count] = best_len
                lits[count] = -1 if flush else np.int64(data[t + best_len])
            total += FLUSH_MATCH_TOKEN_BYTES if flush else MATCH_TOKEN_BYTES
            t += best_len if flush else best_len + 1
        else:
            if emit:
                dists[count] = 0
                lens[count] = 0
                lits[count] = np.int64(data[t])
            total += LITERAL_TOKEN_BYTES
            t += 1
        count += 1
    return count, total, dists, lens, lits


@njit(cache=True)
def _decode(dists, lens, lits, capacity):  # pragma: no cover - jitted
    """Reconstruct bytes from token arrays. Returns (status, bad_index, out, out_len)."""
    out = np.empty(capacity, dtype=np.uint8)
    pos = 0
    for i in range(dists.shape[0]):
        d = dists[i]
        l = lens[i]
        if l > 0:
            if d <= 0:
                return 1, i, out, pos
            if d > pos:
                return 2, i, out, pos
            for k in range(l):
                out[pos] = out[pos - d]
                pos += 1
        if lits[i] >= 0:
            out[pos] = np.uint8(lits[i])
            pos += 1
    return 0, -1, out, pos


@njit(cache=True)
def _encoded_size(data, window_size, buffer_size, min_match):  # pragma: no cover - jitted
    count, total, _, _, _ = _scan(data, window_size, buffer_size, min_match, False)
    return total


@njit(cache=True)
def _delta_batch_kernel(
    contexts, ctx_lens, appended, window_size, buffer_size, min_match
):  # pragma: no cover - jitted
    """deltas[i] = size(context_i) - size(context_i ++ appended_i), in bytes."""
    b = contexts.shape[0]
    d = appended.shape[1]
    out = np.empty(b, dtype=np.int64)
    buf = np.empty(contexts.shape[1] + d, dtype=np.uint8)
    for i in range(b):
        n = ctx_lens[i]
        for k in range(n):
            buf[k] = contexts[i, k]
        for k in range(d):
            buf[n + k] = appended[i, k]
        short = _encoded_size(buf[:n], window_size, buffer_size, min_match)
        long = _encoded_size(buf[: n + d], window_size, buffer_size, min_match)
        out[i] = short - long
    return out


def lz_compress(
    data,
    window_size: int = DEFAULT_WINDOW,
    buffer_size: int = DEFAULT_BUFFER,
    min_match: int = DEFAULT_MIN_MATCH,
) -> EncodedSequence:
    """Tokenize a byte sequence. Any byte sequence is encodable."""
    _check_params(window_size, buffer_size, min_match)
    arr = _as_u8(data)
    if arr.size == 0:
        return EncodedSequence(tokens=(), window_size=window_size, buffer_size=buffer_size)
    count, _, dists, lens, lits = _scan(arr, window_size, buffer_size, min_match, True)
    tokens = tuple(
        Token(int(dists[i]), int(lens[i]), None if lits[i] < 0 else int(lits[i]))
        for i in range(count)
    )
    return EncodedSequence(tokens=tokens, window_size=window_size, buffer_size=buffer_size)


def lz_decompress(enc: EncodedSequence) -> bytes:
    """Exact inverse of lz_compress."""
    if not enc.tokens:
        return b""
    n = len(enc.tokens)
    dists = np.empty(n, dtype=np.int64)
    lens = np.empty(n, dtype=np.int64)
    lits = np.empty(n, dtype=np.int64)
    for i, tok in enumerate(enc.tokens):
        if tok.length > enc.buffer_size or tok.distance > enc.window_size:
            raise CorruptStreamError(
                f"token {i} exceeds declared window/buffer: {tok}"
            )
        if tok.literal is not None and not 0 <= tok.literal <= 255:
            raise CorruptStreamError(f"token {i} literal out of byte range: {tok}")
        dists[i] = tok.distance
        lens[i] = tok.length
        lits[i] = -1 if tok.literal is None else tok.literal
    capacity = int(lens.sum() + (lits >= 0).sum())
    status, bad, out, out_len = _decode(dists, lens, lits, capacity)
    if status == 1:
        raise CorruptStreamError(f"token {bad} has a match with zero distance")
    if status == 2:
        raise CorruptStreamError(f"token {bad} references further back than bytes emitted")
    return out[:out_len].tobytes()


def encoded_length(
    seq,
    granularity: int = DEFAULT_GRANULARITY,
    window_size: int = DEFAULT_WINDOW,
    buffer_size: int = DEFAULT_BUFFER,
    min_match: int = DEFAULT_MIN_MATCH,
) -> int:
    """Compressed size in bytes of a real action sequence after quantization."""
    _check_params(window_size, buffer_size, min_match)
    data = _as_u8(serialize(quantize(seq, granularity)))
    if data.size == 0:
        return 0
    return int(_encoded_size(data, window_size, buffer_size, min_match))


def delta(
    context,
    next_action,
    granularity: int = DEFAULT_GRANULARITY,
    window_size: int = DEFAULT_WINDOW,
    buffer_size: int = DEFAULT_BUFFER,
    min_match: int = DEFAULT_MIN_MATCH,
) -> float:
    """Encoding-cost delta of appending one action to a context, in bytes.

    delta = encoded_length(context) - encoded_length(context ++ next_action).
    Near zero when the continuation is predictable, negative when it is not.
    """
    ctx = np.asarray(context, dtype=np.float64)
    if ctx.size == 0:
        raise InputDomainError("delta requires a non-empty context")
    nxt = np.atleast_1d(np.asarray(next_action, dtype=np.float64))
    joined = np.concatenate([ctx.reshape(-1), nxt.reshape(-1)])
    short = encoded_length(ctx, granularity, window_size, buffer_size, min_match)
    long = encoded_length(joined, granularity, window_size, buffer_size, min_match)
    return float(short - long)


def delta_batch(
    contexts: Sequence[np.ndarray],
    next_actions: np.ndarray,
    granularity: int = DEFAULT_GRANULARITY,
    window_size: int = DEFAULT_WINDOW,
    buffer_size: int = DEFAULT_BUFFER,
    min_match: int = DEFAULT_MIN_MATCH,
) -> np.ndarray:
    """Vectorized delta over a batch of (context, next_action) pairs.

    Semantically identical to calling delta() per item; one jitted call for
    the training hot path.
    """
    _check_params(window_size, buffer_size, min_match)
    next_arr = np.asarray(next_actions, dtype=np.float64)
    if next_arr.ndim != 2:
        raise InputDomainError("next_actions must have shape (batch, action_dim)")
    b, dim = next_arr.shape
    if len(contexts) != b:
        raise InputDomainError("contexts and next_actions disagree on batch size")
    serialized = []
    for ctx in contexts:
        ctx = np.asarray(ctx, dtype=np.float64)
        if ctx.size == 0:
            raise InputDomainError("delta requires a non-empty context")
        serialized.append(np.frombuffer(serialize(quantize(ctx, granularity)), dtype=np.uint8))
    max_len = max(s.size for s in serialized)
    ctx_mat = np.zeros((b, max_len), dtype=np.uint8)
    ctx_lens = np.empty(b, dtype=np.int64)
    for i, s in enumerate(serialized):
        ctx_mat[i, : s.size] = s
        ctx_lens[i] = s.size
    app = np.frombuffer(serialize(quantize(next_arr, granularity)), dtype=np.uint8)
    app = app.reshape(b, dim)
    out = _delta_batch_kernel(ctx_mat, ctx_lens, app, window_size, buffer_size, min_match)
    return out.astype(np.float64)


# ---------------------------------------------------------------------------
# Sequence-class complexity reporting


@dataclass
class ClassStat:
    label: str
    mean_bytes: float
    std_bytes: float
    lengths: list[int] = field(default_factory=list)


def generate_class_sequence(
    label: str, steps: int, dim: int, rng: np.random.Generator, period: int = 8
) -> np.ndarray:
    """One draw from a named sequence class, shape (steps, dim), values in [-1, 1]."""
    if label == "constant":
        return np.tile(rng.uniform(-1, 1, size=(1, dim)), (steps, 1))
    if label == "bang-bang":
        start = 1.0 if rng.integers(0, 2) else -1.0
        signs = start * (-1.0) ** np.arange(steps)
        return np.tile(signs[:, None], (1, dim))
    if label == "periodic":
        pattern = rng.uniform(-1, 1, size=(period, dim))
        reps = int(np.ceil(steps / period))
        return np.tile(pattern, (reps, 1))[:steps]
    if label == "random":
        return rng.uniform(-1, 1, size=(steps, dim))
    raise InputDomainError(f"unknown sequence class {label!r}")


CLASS_LABELS = ("constant", "bang-bang", "periodic", "random")


def complexity_report(
    steps: int = 200,
    dim: int = 1,
    period: int = 8,
    granularity: int = DEFAULT_GRANULARITY,
    draws: int = 20,
    seed: int = 0,
    window_size: int = DEFAULT_WINDOW,
    buffer_size: int = DEFAULT_BUFFER,
    min_match: int = DEFAULT_MIN_MATCH,
) -> list[ClassStat]:
    """Mean encoded length per sequence class over `draws` random draws."""
    if draws < 1:
        raise ConfigError(f"draws must be >= 1, got {draws}")
    rng = np.random.default_rng(seed)
    stats = []
    for label in CLASS_LABELS:
        lengths = []
        for _ in range(draws):
            seq = generate_class_sequence(label, steps, dim, rng, period=period)
            lengths.append(
                encoded_length(seq, granularity, window_size, buffer_size, min_match)
            )
        stats.append(
            ClassStat(
                label=label,
                mean_bytes=float(np.mean(lengths)),
                std_bytes=float(np.std(lengths)),
                lengths=lengths,
            )
        )
    return stats


def format_report(stats: list[ClassStat]) -> str:
    lines = [f"{'class':<12} {'mean_bytes':>12} {'std_bytes':>12}"]
    for s in stats:
        lines.append(f"{s.label:<12} {s.mean_bytes:>12.2f} {s.std_bytes:>12.3f}")
    return "\n".join(lines)


def report_csv(stats: list[ClassStat]) -> str:
    lines = ["class,mean_bytes,std_bytes"]
    for s in stats:
        lines.append(f"{s.label},{s.mean_bytes:.6f},{s.std_bytes:.6f}")
    return "\n".join(lines) + "\n"
