"""Spectral-peak landmark fingerprints and the on-disk inverted index.

A landmark pairs an anchor peak with a nearby later peak. Its 26-bit hash is
``anchor_bin << 16 | (bin_delta & 0x1ff) << 7 | frame_delta``, so it survives
any time shift of the audio and only the anchor frame moves.
"""

from __future__ import annotations

import logging
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import maximum_filter
from scipy.signal import get_window

from . import audio
from .errors import (
    DecodeError,
    EmptyAudioError,
    EmptyIndexError,
    IndexCorruptError,
    IndexFormatError,
    IndexVersionError,
    LeakauditError,
    ParamsMismatchError,
    TooShortError,
)
from .manifest import Catalog

logger = logging.getLogger(__name__)

ANCHOR_BITS = 10
DELTA_BITS = 9
DT_BITS = 7
DT_MASK = (1 << DT_BITS) - 1
DELTA_MASK = (1 << DELTA_BITS) - 1
ANCHOR_MASK = (1 << ANCHOR_BITS) - 1
DELTA_SHIFT = DT_BITS
ANCHOR_SHIFT = DT_BITS + DELTA_BITS

MAX_ANCHOR_BIN = ANCHOR_MASK
MAX_FRAME_DELTA = DT_MASK
MAX_BIN_DELTA = (1 << (DELTA_BITS - 1)) - 1

MAGIC = b"LAFP"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class FingerprintParams:
    sample_rate: int = 16000
    window: int = 2048
    hop: int = 512
    peak_frames: int = 5
    peak_bins: int = 5
    peaks_per_second: int = 30
    max_frame_delta: int = 127
    max_bin_delta: int = 255
    fan_out: int = 5
    threshold_db: float = 20.0
    floor_db: float = -100.0
    percentile: float = 10.0

    _STRUCT = struct.Struct("<9I3d")

    def __post_init__(self) -> None:
        ints = (self.sample_rate, self.window, self.hop, self.peak_frames, self.peak_bins,
                self.peaks_per_second, self.max_frame_delta, self.max_bin_delta, self.fan_out)
        if any(v <= 0 for v in ints):
            raise ValueError("fingerprint parameters must be positive")
        if self.hop > self.window:
            raise ValueError("hop must not exceed window")
        if self.max_frame_delta > MAX_FRAME_DELTA or self.max_bin_delta > MAX_BIN_DELTA:
            raise ValueError("target zone exceeds the hash layout")

    @property
    def n_bins(self) -> int:
        return self.window // 2 + 1

    @property
    def frames_per_second(self) -> float:
        return self.sample_rate / self.hop

    def frame_to_seconds(self, frame):
        return frame * self.hop / self.sample_rate

    def to_bytes(self) -> bytes:
        return self._STRUCT.pack(*astuple(self))

    @classmethod
    def from_bytes(cls, data: bytes) -> FingerprintParams:
        return cls(*cls._STRUCT.unpack(data))


DEFAULT_PARAMS = FingerprintParams()


class Peak(NamedTuple):
    frame: int
    bin: int
    magnitude_db: float


class Landmark(NamedTuple):
    hash: int
    anchor_frame: int


def pack_hash(anchor_bin, bin_delta, frame_delta):
    """Pack a landmark triple into its 26-bit code; works on ints and integer arrays."""
    return (anchor_bin << ANCHOR_SHIFT) | ((bin_delta & DELTA_MASK) << DELTA_SHIFT) | frame_delta


def unpack_hash(code):
    anchor_bin = (code >> ANCHOR_SHIFT) & ANCHOR_MASK
    delta = (code >> DELTA_SHIFT) & DELTA_MASK
    bin_delta = delta - ((delta >> (DELTA_BITS - 1)) << DELTA_BITS)
    return anchor_bin, bin_delta, code & DT_MASK


def spectrogram(wave: audio.Waveform, params: FingerprintParams = DEFAULT_PARAMS) -> np.ndarray:
    """Log-magnitude STFT, shape (frames, window // 2 + 1), floored at ``params.floor_db``."""
    if wave.sample_rate != params.sample_rate:
        raise ValueError(f"waveform rate {wave.sample_rate} != {params.sample_rate}")
    x = np.asarray(wave.samples, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("spectrogram needs a mono waveform")
    if x.shape[0] < params.window:
        raise TooShortError(f"{x.shape[0]} samples is shorter than one {params.window}-sample window")
    win = get_window("hann", params.window)
    frames = sliding_window_view(x, params.window)[:: params.hop]
    mag = np.abs(np.fft.rfft(frames * win, axis=1)) * (2.0 / win.sum())
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag)
    return np.maximum(db, params.floor_db)


def extract_peaks(spgram: np.ndarray, params: FingerprintParams = DEFAULT_PARAMS) -> list[Peak]:
    spgram = np.asarray(spgram, dtype=np.float64)
    if spgram.size == 0:
        return []
    pf, pb = params.peak_frames, params.peak_bins
    full = maximum_filter(spgram, size=(2 * pf + 1, 2 * pb + 1), mode="constant", cval=-np.inf)
    gate = np.percentile(spgram, params.percentile) + params.threshold_db
    frames, bins = np.nonzero((spgram == full) & (spgram >= gate))
    # strictness: the maximum must be unique within its neighbourhood
    strict = np.fromiter(
        (
            np.count_nonzero(spgram[max(t - pf, 0) : t + pf + 1, max(f - pb, 0) : f + pb + 1] == spgram[t, f]) == 1
            for t, f in zip(frames.tolist(), bins.tolist())
        ),
        dtype=bool,
        count=frames.shape[0],
    )
    frames, bins = frames[strict], bins[strict]
    mags = spgram[frames, bins]

    # per-second cap: strongest first, ties to earlier (frame, bin)
    second = (frames * params.hop) // params.sample_rate
    order = np.lexsort((bins, frames, -mags, second))
    second_sorted = second[order]
    starts = np.searchsorted(second_sorted, second_sorted, side="left")
    keep = order[(np.arange(order.size) - starts) < params.peaks_per_second]
    keep = keep[np.lexsort((bins[keep], frames[keep]))]
    return [Peak(int(frames[i]), int(bins[i]), float(mags[i])) for i in keep]


def landmarks(peaks: Sequence[Peak], params: FingerprintParams = DEFAULT_PARAMS) -> list[Landmark]:
    """Pair each anchor with its ``fan_out`` nearest later peaks in the target zone.

    Nearness is frame_delta first, then |bin_delta|, then bin_delta. Anchors in
    bins that do not fit the 10-bit anchor field are skipped.
    """
    out: list[Landmark] = []
    n = len(peaks)
    for i in range(n):
        t1, f1, _ = peaks[i]
        if f1 > MAX_ANCHOR_BIN:
            continue
        cands: list[tuple[int, int, int]] = []
        for j in range(i + 1, n):
            t2, f2, _ = peaks[j]
            dt = t2 - t1
            if dt < 1:
                continue
            if dt > params.max_frame_delta:
                break
            # later peaks can only be farther once fan_out candidates sit at a smaller dt
            if len(cands) >= params.fan_out and dt > cands[params.fan_out - 1][0]:
                break
            df = f2 - f1
            if abs(df) <= params.max_bin_delta:
                cands.append((dt, abs(df), df))
                cands.sort()
        for dt, _, df in cands[: params.fan_out]:
            out.append(Landmark(pack_hash(f1, df, dt), t1))
    return out


@dataclass(frozen=True, eq=False)
class Fingerprint:
    hashes: np.ndarray
    frames: np.ndarray
    params: FingerprintParams
    duration_s: float

    def __len__(self) -> int:
        return int(self.hashes.shape[0])

    def landmarks(self) -> list[Landmark]:
        return [Landmark(int(h), int(f)) for h, f in zip(self.hashes, self.frames)]


def fingerprint_wave(wave: audio.Waveform, params: FingerprintParams = DEFAULT_PARAMS) -> Fingerprint:
    lms = landmarks(extract_peaks(spectrogram(wave, params), params), params)
    hashes = np.fromiter((lm.hash for lm in lms), dtype=np.uint32, count=len(lms))
    frames = np.fromiter((lm.anchor_frame for lm in lms), dtype=np.uint32, count=len(lms))
    return Fingerprint(hashes, frames, params, wave.duration_s)


def fingerprint_file(path: str | Path, params: FingerprintParams = DEFAULT_PARAMS) -> Fingerprint:
    wave = audio.load(path)
    if wave.sample_rate != params.sample_rate:
        raise ValueError("params.sample_rate must equal the canonical rate")
    return fingerprint_wave(wave, params)


class RecEntry(NamedTuple):
    id: str
    landmark_count: int
    duration_s: float


@dataclass(eq=False)
class FingerprintIndex:
    """Inverted index: postings are parallel arrays sorted by (hash, ordinal, frame)."""

    params: FingerprintParams
    rec_table: tuple[RecEntry, ...]
    hashes: np.ndarray
    ordinals: np.ndarray
    frames: np.ndarray
    skipped: list[tuple[str, str]] = field(default_factory=list)

    @classmethod
    def empty(cls, params: FingerprintParams = DEFAULT_PARAMS) -> FingerprintIndex:
        z = np.zeros(0, dtype=np.uint32)
        return cls(params, (), z, z.copy(), z.copy())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FingerprintIndex):
            return NotImplemented
        return (
            self.params == other.params
            and self.rec_table == other.rec_table
            and np.array_equal(self.hashes, other.hashes)
            and np.array_equal(self.ordinals, other.ordinals)
            and np.array_equal(self.frames, other.frames)
        )

    def __len__(self) -> int:
        return len(self.rec_table)

    @property
    def n_postings(self) -> int:
        return int(self.hashes.shape[0])

    @cached_property
    def ordinal_of(self) -> dict[str, int]:
        return {e.id: i for i, e in enumerate(self.rec_table)}

    @cached_property
    def postings(self) -> dict[int, list[tuple[int, int]]]:
        out: dict[int, list[tuple[int, int]]] = {}
        for h, o, f in zip(self.hashes.tolist(), self.ordinals.tolist(), self.frames.tolist()):
            out.setdefault(h, []).append((o, f))
        return out

    def lookup(self, hash_code: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.searchsorted(self.hashes, hash_code, side="left")
        hi = np.searchsorted(self.hashes, hash_code, side="right")
        return self.ordinals[lo:hi], self.frames[lo:hi]

    @cached_property
    def _by_ordinal(self) -> tuple[np.ndarray, np.ndarray]:
        order = np.lexsort((self.hashes, self.frames, self.ordinals))
        starts = np.searchsorted(self.ordinals[order], np.arange(len(self.rec_table) + 1))
        return order, starts

    def fingerprint_of(self, ordinal: int) -> Fingerprint:
        """Reconstruct one recording's landmarks (sorted by frame) from the postings."""
        order, starts = self._by_ordinal
        sel = order[starts[ordinal] : starts[ordinal + 1]]
        e = self.rec_table[ordinal]
        return Fingerprint(self.hashes[sel], self.frames[sel], self.params, e.duration_s)

    def check_params(self, params: FingerprintParams) -> None:
        if params != self.params:
            raise ParamsMismatchError("fingerprint parameters differ from the index parameters; refusing to match")


def index_from_fingerprints(
    entries: Sequence[tuple[str, Fingerprint]], params: FingerprintParams = DEFAULT_PARAMS
) -> FingerprintIndex:
    if not entries:
        return FingerprintIndex.empty(params)
    for rec_id, fp in entries:
        if fp.params != params:
            raise ParamsMismatchError(f"fingerprint of {rec_id!r} was built with different parameters")
    rec_table = tuple(RecEntry(rid, len(fp), float(fp.duration_s)) for rid, fp in entries)
    hashes = np.concatenate([fp.hashes for _, fp in entries]).astype(np.uint32)
    frames = np.concatenate([fp.frames for _, fp in entries]).astype(np.uint32)
    ordinals = np.repeat(np.arange(len(entries), dtype=np.uint32), [len(fp) for _, fp in entries])
    order = np.lexsort((frames, ordinals, hashes))
    return FingerprintIndex(params, rec_table, hashes[order], ordinals[order], frames[order])


def build_index(
    catalog: Catalog, params: FingerprintParams = DEFAULT_PARAMS, threads: int = 1
) -> FingerprintIndex:
    """Fingerprint every decodable recording of at least one second.

    Failures are logged and listed in ``index.skipped``; they never abort the build.
    """

    def work(rec):
        try:
            wave = audio.load(catalog.resolve_audio(rec))
        except (DecodeError, EmptyAudioError) as e:
            return rec.id, None, str(e)
        if wave.duration_s < 1.0:
            return rec.id, None, f"duration {wave.duration_s:.3f}s below 1 s"
        try:
            return rec.id, fingerprint_wave(wave, params), None
        except LeakauditError as e:
            return rec.id, None, str(e)

    recs = list(catalog)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, recs))
    else:
        results = [work(r) for r in recs]

    entries, skipped = [], []
    for rec_id, fp, err in results:
        if fp is None:
            logger.warning("skipping %s: %s", rec_id, err)
            skipped.append((rec_id, err))
        else:
            entries.append((rec_id, fp))
    if not entries:
        raise EmptyIndexError("no recording could be fingerprinted")
    index = index_from_fingerprints(entries, params)
    index.skipped = skipped
    logger.info("indexed %d recordings, %d landmarks, %d skipped", len(entries), index.n_postings, len(skipped))
    return index


# --- serialization -------------------------------------------------------

_HEAD = struct.Struct("<4sH")


def index_to_bytes(index: FingerprintIndex) -> bytes:
    parts = [_HEAD.pack(MAGIC, FORMAT_VERSION), index.params.to_bytes(), struct.pack("<I", len(index.rec_table))]
    for e in index.rec_table:
        raw = e.id.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"recording id too long: {e.id[:40]!r}...")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<Id", e.landmark_count, e.duration_s))

    uniq, starts, counts = np.unique(index.hashes, return_index=True, return_counts=True)
    parts.append(struct.pack("<I", uniq.shape[0]))

    # body: per distinct hash (hash, count) followed by count x (ordinal, frame)
    body = np.empty(2 * uniq.shape[0] + 2 * index.n_postings, dtype="<u4")
    group_pos = 2 * np.arange(uniq.shape[0]) + 2 * starts
    body[group_pos] = uniq
    body[group_pos + 1] = counts
    group_of_posting = np.repeat(np.arange(uniq.shape[0]), counts)
    post_pos = 2 * group_of_posting + 2 + 2 * np.arange(index.n_postings)
    body[post_pos] = index.ordinals
    body[post_pos + 1] = index.frames
    body_bytes = body.tobytes()
    parts.append(body_bytes)
    parts.append(struct.pack("<I", zlib.crc32(body_bytes)))
    return b"".join(parts)


def index_from_bytes(data: bytes) -> FingerprintIndex:
    if len(data) < _HEAD.size or data[:4] != MAGIC:
        raise IndexFormatError("not a fingerprint index (bad magic)")
    _, version = _HEAD.unpack_from(data)
    if version != FORMAT_VERSION:
        raise IndexVersionError(f"index format version {version} is incompatible with {FORMAT_VERSION}")
    pos = _HEAD.size
    try:
        params = FingerprintParams.from_bytes(data[pos : pos + FingerprintParams._STRUCT.size])
        pos += FingerprintParams._STRUCT.size
        (n_recs,) = struct.unpack_from("<I", data, pos)
        pos += 4
        recs = []
        for _ in range(n_recs):
            (n,) = struct.unpack_from("<H", data, pos)
            rid = data[pos + 2 : pos + 2 + n].decode("utf-8")
            count, dur = struct.unpack_from("<Id", data, pos + 2 + n)
            recs.append(RecEntry(rid, count, dur))
            pos += 2 + n + 12
        (n_hashes,) = struct.unpack_from("<I", data, pos)
        pos += 4
    except (struct.error, UnicodeDecodeError, ValueError) as e:
        raise IndexCorruptError(f"truncated or corrupt index header: {e}") from e

    body_bytes = data[pos:-4]
    if len(data) - pos < 4 or len(body_bytes) % 4:
        raise IndexCorruptError("truncated index body")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(body_bytes) != crc:
        raise IndexCorruptError("index body checksum mismatch")

    body = np.frombuffer(body_bytes, dtype="<u4")
    total = sum(e.landmark_count for e in recs)
    if body.shape[0] != 2 * n_hashes + 2 * total:
        raise IndexCorruptError("posting count disagrees with the recording table")
    # group headers must be walked in order: each count gives the next header position
    words = body.tolist()
    heads = []
    p = 0
    while p < len(words) and len(heads) < n_hashes:
        heads.append(p)
        p += 2 + 2 * words[p + 1] if p + 1 < len(words) else 2
    if len(heads) != n_hashes or p != len(words):
        raise IndexCorruptError("malformed posting lists")
    heads_arr = np.asarray(heads, dtype=np.int64)
    counts = body[heads_arr + 1].astype(np.int64) if n_hashes else np.zeros(0, dtype=np.int64)
    if int(counts.sum()) != total:
        raise IndexCorruptError("malformed posting lists")
    group = np.repeat(np.arange(n_hashes), counts)
    within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    pos = heads_arr[group] + 2 + 2 * within
    hashes = np.repeat(body[heads_arr + 0] if n_hashes else body[:0], counts).astype(np.uint32)
    ordinals = body[pos].astype(np.uint32)
    frames = body[pos + 1].astype(np.uint32)
    return FingerprintIndex(params, tuple(recs), hashes, ordinals, frames)


def save_index(index: FingerprintIndex, path: str | Path) -> None:
    from .io import atomic_write_bytes

    atomic_write_bytes(path, index_to_bytes(index))


def load_index(path: str | Path) -> FingerprintIndex:
    return index_from_bytes(Path(path).read_bytes())


__all__ = [
    "FingerprintParams",
    "DEFAULT_PARAMS",
    "Peak",
    "Landmark",
    "Fingerprint",
    "FingerprintIndex",
    "RecEntry",
    "pack_hash",
    "unpack_hash",
    "spectrogram",
    "extract_peaks",
    "landmarks",
    "fingerprint_wave",
    "fingerprint_file",
    "index_from_fingerprints",
    "build_index",
    "index_to_bytes",
    "index_from_bytes",
    "save_index",
    "load_index",
]
