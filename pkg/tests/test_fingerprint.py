import json
import struct
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leakaudit.audio import Waveform, write_wav
from leakaudit.errors import (
    EmptyIndexError,
    IndexCorruptError,
    IndexFormatError,
    IndexVersionError,
    ParamsMismatchError,
    TooShortError,
)
from leakaudit.fingerprint import (
    DEFAULT_PARAMS,
    FingerprintIndex,
    FingerprintParams,
    Peak,
    build_index,
    extract_peaks,
    fingerprint_wave,
    index_from_bytes,
    index_from_fingerprints,
    index_to_bytes,
    landmarks,
    load_index,
    pack_hash,
    save_index,
    spectrogram,
    unpack_hash,
)
from leakaudit.manifest import parse_manifest
from leakaudit.matcher import query
from leakaudit.synth import synth_signal

P = DEFAULT_PARAMS


def tone_bursts(seed: int, seconds: float = 6.0) -> np.ndarray:
    """Isolated tone bursts on exact digital silence, so the peak gate sits at the floor."""
    rng = np.random.default_rng(seed)
    x = np.zeros(int(seconds * 16000))
    for start in np.arange(0.3, seconds - 0.5, 0.35):
        f = rng.uniform(300, 6000)
        n = int(rng.uniform(0.08, 0.2) * 16000)
        s = int(start * 16000)
        x[s : s + n] += 0.3 * np.sin(2 * np.pi * f * np.arange(n) / 16000) * np.hanning(n)
    return x


def test_silence_spectrogram_is_floor():
    spec = spectrogram(Waveform(np.zeros(2048), 16000))
    assert spec.shape == (1, 1025)
    assert np.all(spec == -100.0)


def test_sine_peak_bin():
    t = np.arange(16000) / 16000
    x = 0.5 * np.sin(2 * np.pi * 1000 * t)
    spec = spectrogram(Waveform(x, 16000))
    expected = round(1000 * 2048 / 16000)
    assert expected == 128
    assert np.all(np.argmax(spec, axis=1) == expected)
    # independent FFT of one frame
    frame = x[512 * 3 : 512 * 3 + 2048] * np.hanning(2049)[:2048]
    assert int(np.argmax(np.abs(np.fft.fft(frame))[:1025])) == expected


def test_frame_count():
    n = 16000 + 1536
    assert spectrogram(Waveform(np.zeros(n), 16000)).shape[0] == (n - 2048) // 512 + 1 == 31
    assert spectrogram(Waveform(np.zeros(15872), 16000)).shape[0] == 28


def test_too_short():
    with pytest.raises(TooShortError):
        spectrogram(Waveform(np.zeros(2047), 16000))


def test_frames_cover_hop_offsets():
    x = np.zeros(4096)
    x[1600] = 1.0
    spec = spectrogram(Waveform(x, 16000))
    # frame t covers [512 t, 512 t + 2048): the impulse lies in frames 0..3
    assert np.all(spec[:4].max(axis=1) > -100)
    assert np.all(spec[4:] == -100)


def test_no_peaks_in_silence():
    assert extract_peaks(np.full((50, 1025), -100.0)) == []


def test_single_impulse_peak():
    spec = np.full((40, 1025), -100.0)
    spec[17, 300] = -10.0
    peaks = extract_peaks(spec)
    assert peaks == [Peak(17, 300, -10.0)]


def test_plateau_yields_no_peak():
    spec = np.full((40, 1025), -100.0)
    spec[17, 300] = spec[17, 302] = -10.0
    assert extract_peaks(spec) == []


def test_peaks_sorted_and_strict(rng=np.random.default_rng(3)):
    spec = rng.normal(-60, 15, (120, 1025))
    peaks = extract_peaks(spec)
    assert peaks == sorted(peaks, key=lambda p: (p.frame, p.bin))
    for p in peaks[:50]:
        block = spec[max(p.frame - 5, 0) : p.frame + 6, max(p.bin - 5, 0) : p.bin + 6]
        assert np.count_nonzero(block >= p.magnitude_db) == 1


def test_white_noise_cap():
    x = np.random.default_rng(0).normal(0, 0.1, 160000)
    peaks = extract_peaks(spectrogram(Waveform(x, 16000)))
    assert len(peaks) <= 300
    per_second = Counter(p.frame * 512 // 16000 for p in peaks)
    assert max(per_second.values()) <= 30


def test_cap_keeps_strongest():
    spec = np.full((31, 1025), -100.0)
    vals = {}
    for k in range(40):  # 40 isolated peaks inside the first second
        f, b = (k % 2) * 12 + 3, 12 * (k // 2) + 6
        spec[f, b] = -50.0 + k
        vals[(f, b)] = -50.0 + k
    peaks = extract_peaks(spec)
    assert len(peaks) == 30
    assert sorted(p.magnitude_db for p in peaks) == sorted(vals.values())[10:]


def test_landmark_edge_cases():
    assert landmarks([]) == []
    assert landmarks([Peak(3, 10, 0.0)]) == []
    lms = landmarks([Peak(10, 100, 0.0), Peak(12, 140, 0.0)])
    assert len(lms) == 1
    assert lms[0].anchor_frame == 10
    assert unpack_hash(lms[0].hash) == (100, 40, 2)


def test_hash_layout():
    h = pack_hash(1023, -255, 127)
    assert h < 1 << 26
    assert unpack_hash(h) == (1023, -255, 127)
    assert pack_hash(1, 0, 1) == (1 << 16) | 1


@given(st.integers(0, 1023), st.integers(-255, 255), st.integers(1, 127))
def test_hash_round_trip(a, d, t):
    assert unpack_hash(pack_hash(a, d, t)) == (a, d, t)


def brute_landmarks(peaks, params=P):
    out = []
    for i, (t1, f1, _) in enumerate(peaks):
        if f1 > 1023:
            continue
        cands = [
            (t2 - t1, abs(f2 - f1), f2 - f1)
            for t2, f2, _ in peaks[i + 1 :]
            if 1 <= t2 - t1 <= params.max_frame_delta and abs(f2 - f1) <= params.max_bin_delta
        ]
        out.extend((pack_hash(f1, df, dt), t1) for dt, _, df in sorted(cands)[: params.fan_out])
    return out


peak_lists = st.lists(
    st.tuples(st.integers(0, 400), st.integers(0, 1024)), max_size=60, unique=True
).map(lambda xs: [Peak(t, f, 0.0) for t, f in sorted(xs)])


@settings(max_examples=200)
@given(peak_lists)
def test_landmarks_match_brute_force(peaks):
    lms = landmarks(peaks)
    assert [(lm.hash, lm.anchor_frame) for lm in lms] == brute_landmarks(peaks)
    assert len(lms) <= P.fan_out * len(peaks)
    for lm in lms:
        _, d, t = unpack_hash(lm.hash)
        assert 1 <= t <= 127 and abs(d) <= 255
        assert lm.hash >> 26 == 0


def test_fingerprint_deterministic():
    w = Waveform(synth_signal(np.random.default_rng(5), 8.0), 16000)
    a, b = fingerprint_wave(w), fingerprint_wave(Waveform(w.samples.copy(), 16000))
    assert np.array_equal(a.hashes, b.hashes) and np.array_equal(a.frames, b.frames)
    assert len(a) > 100


@pytest.mark.parametrize("k", [1, 7, 40])
def test_translation_covariance(k):
    x = tone_bursts(k)
    base = fingerprint_wave(Waveform(x, 16000))
    shifted = fingerprint_wave(Waveform(np.concatenate([np.zeros(k * 512), x]), 16000))
    assert len(base) > 30
    assert Counter(zip(base.hashes.tolist(), (base.frames + k).tolist())) == Counter(
        zip(shifted.hashes.tolist(), shifted.frames.tolist())
    )


def _entries(n=3, seconds=5.0):
    rng = np.random.default_rng(11)
    return [(f"r{i}", fingerprint_wave(Waveform(synth_signal(rng, seconds), 16000))) for i in range(n)]


def test_index_accounting_and_order():
    entries = _entries()
    idx = index_from_fingerprints(entries)
    assert idx.n_postings == sum(e.landmark_count for e in idx.rec_table) == sum(len(fp) for _, fp in entries)
    key = np.lexsort((idx.frames, idx.ordinals, idx.hashes))
    assert np.array_equal(key, np.arange(idx.n_postings))
    total = sum(len(v) for v in idx.postings.values())
    assert total == idx.n_postings
    for h, plist in list(idx.postings.items())[:50]:
        assert plist == sorted(plist)
    fp = idx.fingerprint_of(1)
    assert Counter(zip(fp.hashes.tolist(), fp.frames.tolist())) == Counter(
        zip(entries[1][1].hashes.tolist(), entries[1][1].frames.tolist())
    )


def test_round_trip_bytes():
    idx = index_from_fingerprints(_entries())
    raw = index_to_bytes(idx)
    again = index_from_bytes(raw)
    assert again == idx
    assert index_to_bytes(again) == raw
    assert raw[:4] == b"LAFP" and struct.unpack_from("<H", raw, 4)[0] == 1


def test_empty_index_round_trip(tmp_path):
    p = tmp_path / "e.lafp"
    save_index(FingerprintIndex.empty(), p)
    loaded = load_index(p)
    assert len(loaded) == 0 and loaded.n_postings == 0
    assert loaded == FingerprintIndex.empty()


def test_version_mismatch():
    raw = bytearray(index_to_bytes(FingerprintIndex.empty()))
    raw[4:6] = struct.pack("<H", 99)
    with pytest.raises(IndexVersionError):
        index_from_bytes(bytes(raw))


def test_bad_magic():
    with pytest.raises(IndexFormatError):
        index_from_bytes(b"NOPE" + bytes(100))


def test_checksum_detects_corruption():
    raw = bytearray(index_to_bytes(index_from_fingerprints(_entries(1))))
    raw[-20] ^= 0xFF
    with pytest.raises(IndexCorruptError):
        index_from_bytes(bytes(raw))


def test_truncation_detected():
    raw = index_to_bytes(index_from_fingerprints(_entries(1)))
    with pytest.raises(IndexCorruptError):
        index_from_bytes(raw[:-9])


def test_params_guard():
    idx = index_from_fingerprints(_entries(2))
    other = FingerprintParams(fan_out=3)
    probe = fingerprint_wave(Waveform(synth_signal(np.random.default_rng(1), 3.0), 16000), other)
    with pytest.raises(ParamsMismatchError):
        query(idx, probe, "x")
    with pytest.raises(ParamsMismatchError):
        index_from_fingerprints([("a", probe)])
    loaded = index_from_bytes(index_to_bytes(index_from_fingerprints([("a", probe)], other)))
    assert loaded.params == other


def test_params_validation():
    with pytest.raises(ValueError):
        FingerprintParams(hop=4096)
    with pytest.raises(ValueError):
        FingerprintParams(max_frame_delta=200)


def _write_manifest(tmp_path, rows):
    p = tmp_path / "m.jsonl"
    p.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return parse_manifest(p)


def test_build_index_single_and_duplicate_ids(tmp_path):
    x = synth_signal(np.random.default_rng(9), 4.0)
    write_wav(tmp_path / "a.wav", x, 16000)
    row = {"audio_path": "a.wav", "description": "d", "primary_category": "c"}
    one = build_index(_write_manifest(tmp_path, [dict(row, id="a")]))
    assert len(one.rec_table) == 1 and one.n_postings == one.rec_table[0].landmark_count
    two = build_index(_write_manifest(tmp_path, [dict(row, id="a"), dict(row, id="b")]))
    fa, fb = two.fingerprint_of(0), two.fingerprint_of(1)
    assert Counter(zip(fa.hashes.tolist(), fa.frames.tolist())) == Counter(zip(fb.hashes.tolist(), fb.frames.tolist()))


def test_build_index_skips_bad_files(tmp_path):
    write_wav(tmp_path / "ok.wav", synth_signal(np.random.default_rng(9), 3.0), 16000)
    write_wav(tmp_path / "short.wav", np.zeros(8000), 16000)
    (tmp_path / "junk.wav").write_bytes(b"garbage")
    rows = [{"id": n, "audio_path": f"{n}.wav", "description": "d", "primary_category": "c"}
            for n in ("ok", "short", "junk", "missing")]
    idx = build_index(_write_manifest(tmp_path, rows))
    assert [e.id for e in idx.rec_table] == ["ok"]
    assert sorted(r for r, _ in idx.skipped) == ["junk", "missing", "short"]


def test_build_index_nothing_usable(tmp_path):
    (tmp_path / "junk.wav").write_bytes(b"garbage")
    cat = _write_manifest(tmp_path, [{"id": "j", "audio_path": "junk.wav", "description": "d", "primary_category": "c"}])
    with pytest.raises(EmptyIndexError):
        build_index(cat)


def test_threads_do_not_change_index(tmp_path):
    rng = np.random.default_rng(4)
    rows = []
    for i in range(4):
        write_wav(tmp_path / f"{i}.wav", synth_signal(rng, 3.0), 16000)
        rows.append({"id": f"r{i}", "audio_path": f"{i}.wav", "description": "d", "primary_category": "c"})
    cat = _write_manifest(tmp_path, rows)
    assert index_to_bytes(build_index(cat, threads=1)) == index_to_bytes(build_index(cat, threads=3))
