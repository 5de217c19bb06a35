"""Synthetic corpora with planted duplicates, for tests and calibration runs.

    python -m leakaudit.synth --out corpus_dir [--files 50] [--seed 0]
"""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import write_wav
from .manifest import Catalog, Recording

CATEGORIES = ("Animals", "Birds", "Machines", "Nature", "Transport", "Water", "Weather", "Crowds")
TOPICS = ("Camel Market", "Rajasthan Musicians", "Green Tree Frog", "Common Bee Fly", "Dawn Chorus", "Harbour")
RECORDISTS = ("Graham Ross", "Lyndon Bird", "Roy Horton")


@dataclass(frozen=True)
class PlantedPair:
    source: str
    copy: str
    kind: str
    offset_s: float = 0.0


def _envelope(n: int) -> np.ndarray:
    return np.hanning(n) if n > 2 else np.ones(n)


def synth_signal(rng: np.random.Generator, duration_s: float, sample_rate: int = 16000,
                 events_per_second: float = 6.0) -> np.ndarray:
    """Tone bursts, chirps and noise bursts over a faint noise floor, peak-normalized to 0.4."""
    n = int(round(duration_s * sample_rate))
    x = rng.normal(0.0, 0.002, n)
    nyq = min(sample_rate / 2.0, 8000.0)
    n_events = rng.poisson(events_per_second * duration_s)
    for _ in range(n_events):
        kind = rng.choice(3, p=(0.55, 0.3, 0.15))
        dur = {0: rng.uniform(0.05, 0.3), 1: rng.uniform(0.2, 0.6), 2: rng.uniform(0.03, 0.1)}[kind]
        m = max(int(dur * sample_rate), 8)
        start = int(rng.integers(0, max(n - m, 1)))
        m = min(m, n - start)
        t = np.arange(m) / sample_rate
        amp = rng.uniform(0.05, 0.3)
        if kind == 0:
            f = rng.uniform(150.0, 0.85 * nyq)
            ev = np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
        elif kind == 1:
            f0, f1 = rng.uniform(150.0, 0.85 * nyq, size=2)
            phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) * t**2 / max(dur, 1e-3))
            ev = np.sin(phase)
        else:
            ev = rng.normal(0.0, 0.5, m)
        x[start : start + m] += amp * ev * _envelope(m)
    return 0.4 * x / np.max(np.abs(x))


def generate_corpus(out_dir: str | Path, n_files: int = 50, n_planted: int = 10, seed: int = 0,
                    min_duration_s: float = 25.0, max_duration_s: float = 45.0) -> tuple[Path, list[PlantedPair]]:
    """Write WAVs plus ``manifest.jsonl``; returns the manifest path and the planted relations.

    Planted relations cycle through exact copy, 20 s excerpt, +6 dB gain,
    -6 dB gain and additive noise at 20 dB SNR, each derived from a distinct source.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n_base = n_files - n_planted
    if n_base < n_planted:
        raise ValueError("need at least as many source files as planted relations")

    ids = [f"sfx_{i:04d}" for i in rng.permutation(n_files)]
    base_ids, derived_ids = ids[:n_base], ids[n_base:]
    audio: dict[str, tuple[np.ndarray, int]] = {}
    for i, rid in enumerate(base_ids):
        rate = 22050 if i % 8 == 7 else 16000
        dur = float(rng.uniform(min_duration_s, max_duration_s))
        audio[rid] = (synth_signal(rng, dur, rate), rate)

    kinds = ("exact", "excerpt", "gain+6", "gain-6", "noise20")
    sources = [base_ids[i] for i in rng.choice(n_base, size=n_planted, replace=False)]
    planted = []
    for j, (src, dst) in enumerate(zip(sources, derived_ids)):
        x, rate = audio[src]
        kind = kinds[j % len(kinds)]
        offset = 0.0
        if kind == "exact":
            y = x.copy()
        elif kind == "excerpt":
            length = int(20.0 * rate)
            start = int(rng.integers(rate, x.shape[0] - length))
            y = x[start : start + length].copy()
            offset = start / rate
        elif kind == "gain+6":
            y = x * 10 ** (6 / 20)
        elif kind == "gain-6":
            y = x * 10 ** (-6 / 20)
        else:
            p_sig = np.mean(x**2)
            y = x + rng.normal(0.0, np.sqrt(p_sig / 10 ** (20 / 10)), x.shape[0])
        audio[dst] = (y, rate)
        planted.append(PlantedPair(src, dst, kind, offset))

    lines = []
    for k, rid in enumerate(sorted(audio)):
        x, rate = audio[rid]
        fname = f"{rid}.wav"
        write_wav(out_dir / fname, x, rate)
        rec = {
            "id": rid,
            "audio_path": fname,
            "description": f"{TOPICS[k % len(TOPICS)]} - synthetic take {k}",
            "primary_category": CATEGORIES[k % len(CATEGORIES)],
            "duration_s": round(x.shape[0] / rate, 6),
        }
        if k % 3 == 0:
            rec.update(date=f"1996-11-{1 + k % 5:02d}", recordists=[RECORDISTS[k % len(RECORDISTS)]],
                       source_archive="NHU")
        lines.append(json.dumps(rec, sort_keys=True))
    manifest = out_dir / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out_dir / "planted.json").write_text(
        json.dumps([p.__dict__ for p in planted], indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest, planted


def synthetic_catalog(n_items: int = 10000, n_categories: int = 8, max_group: int = 20,
                      seed: int = 0) -> tuple[Catalog, list[tuple[str, str]]]:
    """Metadata-only catalog plus chain pairs forming groups of 1..max_group members.

    Category frequencies are skewed and groups are mostly single-category, with
    occasional mixed members.
    """
    rng = np.random.default_rng(seed)
    cats = [f"cat{c}" for c in range(n_categories)]
    weights = rng.uniform(0.5, 2.0, n_categories)
    weights /= weights.sum()
    recs, pairs = [], []
    i = 0
    while i < n_items:
        size = min(int(rng.integers(1, max_group + 1)), n_items - i)
        cat = cats[rng.choice(n_categories, p=weights)]
        members = []
        for _ in range(size):
            c = cat if rng.random() > 0.1 else cats[rng.integers(n_categories)]
            rid = f"r{i:06d}"
            recs.append(Recording(rid, f"{rid}.wav", f"item {i}", c))
            members.append(rid)
            i += 1
        pairs.extend(zip(members, members[1:]))
    order = rng.permutation(len(recs))
    return Catalog.from_recordings(recs[k] for k in order), pairs


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="python -m leakaudit.synth", description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--files", type=int, default=50)
    ap.add_argument("--planted", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    manifest, planted = generate_corpus(args.out, args.files, args.planted, args.seed)
    print(f"wrote {args.files} files, {len(planted)} planted relations -> {manifest}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
