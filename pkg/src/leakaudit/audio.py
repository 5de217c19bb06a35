"""RIFF/WAVE PCM decoding and canonicalization to 16 kHz mono."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import gcd
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .errors import DecodeError, EmptyAudioError

CANONICAL_RATE = 16000

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass
class Waveform:
    """Samples shaped (channels, n) for decoded audio or (n,) once canonical."""

    samples: np.ndarray
    sample_rate: int

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[-1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass(frozen=True)
class WavInfo:
    channels: int
    sample_rate: int
    bits: int
    format_tag: int
    n_frames: int

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.sample_rate


def _read_chunks(data: bytes) -> tuple[WavInfo, int, int]:
    """Walk the RIFF chunk list; returns (info, data_offset, data_len)."""
    if len(data) < 12:
        raise DecodeError("truncated RIFF header", offset=len(data))
    if data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise DecodeError("not a RIFF/WAVE file", offset=0)

    fmt = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if cid == b"fmt ":
            if body + 16 > len(data) or size < 16:
                raise DecodeError("truncated fmt chunk", offset=min(body + size, len(data)))
            tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", data, body)
            if tag == WAVE_FORMAT_EXTENSIBLE:
                if size < 40 or body + 40 > len(data):
                    raise DecodeError("truncated WAVE_FORMAT_EXTENSIBLE header", offset=body)
                (tag,) = struct.unpack_from("<H", data, body + 24)
            fmt = (tag, channels, rate, block_align, bits)
        elif cid == b"data":
            if fmt is None:
                raise DecodeError("data chunk precedes fmt chunk", offset=pos)
            tag, channels, rate, block_align, bits = fmt
            if body + size > len(data):
                raise DecodeError(
                    f"data chunk declares {size} bytes but only {len(data) - body} remain",
                    offset=len(data),
                )
            if tag not in (WAVE_FORMAT_PCM, WAVE_FORMAT_IEEE_FLOAT):
                raise DecodeError(f"unsupported codec 0x{tag:04x}", offset=pos)
            if (tag, bits) not in {(1, 8), (1, 16), (1, 24), (1, 32), (3, 32)}:
                raise DecodeError(f"unsupported sample format (tag {tag}, {bits} bit)", offset=pos)
            if channels < 1 or rate < 1 or block_align != channels * bits // 8:
                raise DecodeError("inconsistent fmt chunk", offset=pos)
            info = WavInfo(channels, rate, bits, tag, size // block_align)
            return info, body, info.n_frames * block_align
        pos = body + size + (size & 1)
    if fmt is None:
        raise DecodeError("no fmt chunk", offset=len(data))
    raise DecodeError("no data chunk", offset=len(data))


def probe(path: str | Path) -> WavInfo:
    data = Path(path).read_bytes()
    return _read_chunks(data)[0]


def decode_bytes(data: bytes) -> Waveform:
    info, start, length = _read_chunks(data)
    raw = data[start : start + length]
    if info.format_tag == WAVE_FORMAT_IEEE_FLOAT:
        x = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    elif info.bits == 8:
        x = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif info.bits == 16:
        x = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif info.bits == 24:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        x = v.astype(np.float64) / float(1 << 23)
    else:
        x = np.frombuffer(raw, dtype="<i4").astype(np.float64) / float(1 << 31)
    if not np.all(np.isfinite(x)):
        raise DecodeError("non-finite float samples", offset=start)
    return Waveform(x.reshape(-1, info.channels).T.copy(), info.sample_rate)


def decode(path: str | Path) -> Waveform:
    """Decode a PCM WAV file into per-channel samples at the native rate."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise DecodeError(f"cannot read {path}: {e.strerror}") from e
    return decode_bytes(data)


def canonicalize(wave: Waveform) -> Waveform:
    """Downmix to mono (unweighted mean) and resample to 16 kHz."""
    x = np.asarray(wave.samples, dtype=np.float64)
    if x.size == 0:
        raise EmptyAudioError("zero-length audio")
    if x.ndim == 2:
        x = x[0].copy() if x.shape[0] == 1 else x.mean(axis=0)
    rate = int(wave.sample_rate)
    if rate == CANONICAL_RATE:
        return Waveform(x, CANONICAL_RATE)
    g = gcd(CANONICAL_RATE, rate)
    y = resample_poly(x, CANONICAL_RATE // g, rate // g)
    np.clip(y, -1.0, 1.0, out=y)
    return Waveform(y, CANONICAL_RATE)


def load(path: str | Path) -> Waveform:
    return canonicalize(decode(path))


def encode_wav(samples: np.ndarray, sample_rate: int, bits: int = 16, float_format: bool = False) -> bytes:
    """Encode (n,) or (channels, n) samples in [-1, 1] as a PCM or float WAV."""
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    channels = x.shape[0]
    inter = x.T.reshape(-1)
    if float_format:
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
        payload = inter.astype("<f4").tobytes()
    else:
        tag = WAVE_FORMAT_PCM
        clipped = np.clip(inter, -1.0, 1.0)
        if bits == 8:
            payload = np.clip(np.round(clipped * 128.0 + 128.0), 0, 255).astype(np.uint8).tobytes()
        elif bits == 16:
            payload = np.clip(np.round(clipped * 32768.0), -32768, 32767).astype("<i2").tobytes()
        elif bits == 24:
            v = np.clip(np.round(clipped * (1 << 23)), -(1 << 23), (1 << 23) - 1).astype(np.int64)
            v &= 0xFFFFFF
            payload = np.stack([v & 0xFF, (v >> 8) & 0xFF, (v >> 16) & 0xFF], axis=1).astype(np.uint8).tobytes()
        elif bits == 32:
            v = np.clip(np.round(clipped * (1 << 31)), -(1 << 31), (1 << 31) - 1)
            payload = v.astype("<i4").tobytes()
        else:
            raise ValueError(f"unsupported bit depth {bits}")
    block_align = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, sample_rate, sample_rate * block_align, block_align, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int, bits: int = 16, float_format: bool = False) -> None:
    Path(path).write_bytes(encode_wav(samples, sample_rate, bits, float_format))
