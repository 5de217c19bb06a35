"""Candidate pair search, offset-histogram scoring and the duplicate acceptance rule."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import IntegrityError
from .fingerprint import Fingerprint, FingerprintIndex, FingerprintParams
from .manifest import Catalog

logger = logging.getLogger(__name__)

DEFAULT_MIN_SCORE = 25
DEFAULT_MIN_COVERAGE = 0.5


class RawHit(NamedTuple):
    query_id: str
    candidate_id: str
    offset_frames: int
    query_frame: int


@dataclass(frozen=True)
class MatchCandidate:
    pair: tuple[str, str]
    score: int
    best_offset_frames: int
    match_duration_s: float
    matched_seconds: int

    @property
    def coverage(self) -> float:
        # capped: second bins at both span edges can outnumber the span itself
        return min(1.0, self.matched_seconds / max(self.match_duration_s, 1.0))


@dataclass(frozen=True)
class DuplicatePair:
    a: str
    b: str
    score: int
    coverage: float
    best_offset_frames: int
    offset_s: float

    @property
    def pair(self) -> tuple[str, str]:
        return (self.a, self.b)

    def to_json(self) -> str:
        return json.dumps(
            {"a": self.a, "b": self.b, "score": self.score, "coverage": round(self.coverage, 6),
             "offset_s": round(self.offset_s, 6)},
            sort_keys=True,
        )

    @classmethod
    def from_dict(cls, d: dict) -> DuplicatePair:
        a, b = sorted((str(d["a"]), str(d["b"])))
        return cls(a, b, int(d.get("score", 0)), float(d.get("coverage", 0.0)), 0, float(d.get("offset_s", 0.0)))


def unordered(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def _gather(index: FingerprintIndex, hashes: np.ndarray, frames: np.ndarray):
    """All (probe landmark, posting) pairs sharing a hash, as parallel arrays."""
    lo = np.searchsorted(index.hashes, hashes, side="left")
    hi = np.searchsorted(index.hashes, hashes, side="right")
    counts = hi - lo
    total = int(counts.sum())
    src = np.repeat(np.arange(hashes.shape[0]), counts)
    pos = np.repeat(lo, counts) + (np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts))
    qframes = frames[src].astype(np.int64)
    cand = index.ordinals[pos].astype(np.int64)
    offsets = index.frames[pos].astype(np.int64) - qframes
    return cand, offsets, qframes


def query(index: FingerprintIndex, probe: Fingerprint, probe_id: str) -> list[RawHit]:
    """One hit per posting sharing a probe hash, excluding postings of ``probe_id`` itself."""
    index.check_params(probe.params)
    cand, offsets, qframes = _gather(index, probe.hashes, probe.frames)
    self_ord = index.ordinal_of.get(probe_id, -1)
    keep = cand != self_ord
    ids = [e.id for e in index.rec_table]
    return [
        RawHit(probe_id, ids[c], int(o), int(q))
        for c, o, q in zip(cand[keep].tolist(), offsets[keep].tolist(), qframes[keep].tolist())
    ]


def best_offset(offsets: np.ndarray) -> tuple[int, int]:
    """Offset maximizing the count of hits within +/-1 frame.

    Ties go to the offset holding the most hits itself, then to the smallest
    |offset|, then to the negative one.
    """
    values, counts = np.unique(offsets, return_counts=True)
    cand = np.unique(np.concatenate([values - 1, values, values + 1]))
    last = values.shape[0] - 1

    def count_at(x):
        j = np.minimum(np.searchsorted(values, x), last)
        return np.where(values[j] == x, counts[j], 0)

    own = count_at(cand)
    merged = count_at(cand - 1) + own + count_at(cand + 1)
    best = np.lexsort((cand, np.abs(cand), -own, -merged))[0]
    return int(cand[best]), int(merged[best])


def score_arrays(pair: tuple[str, str], offsets: np.ndarray, qframes: np.ndarray,
                 params: FingerprintParams) -> MatchCandidate:
    if offsets.shape[0] == 0:
        raise ValueError("score_candidate needs at least one hit")
    best, score = best_offset(offsets)
    matched = qframes[np.abs(offsets - best) <= 1]
    span = int(matched.max() - matched.min())
    seconds = np.unique((matched * params.hop) // params.sample_rate).shape[0]
    return MatchCandidate(pair, score, best, span * params.hop / params.sample_rate, int(seconds))


def score_candidate(hits: Sequence[RawHit], params: FingerprintParams) -> MatchCandidate:
    if not hits:
        raise ValueError("score_candidate needs at least one hit")
    q, c = hits[0].query_id, hits[0].candidate_id
    if any(h.query_id != q or h.candidate_id != c for h in hits):
        raise ValueError("hits must belong to a single (query, candidate) pair")
    offsets = np.fromiter((h.offset_frames for h in hits), dtype=np.int64, count=len(hits))
    qframes = np.fromiter((h.query_frame for h in hits), dtype=np.int64, count=len(hits))
    return score_arrays(unordered(q, c), offsets, qframes, params)


def accept_pair(mc: MatchCandidate, min_score: int = DEFAULT_MIN_SCORE,
                min_coverage: float = DEFAULT_MIN_COVERAGE) -> bool:
    return mc.score >= min_score and mc.coverage > min_coverage


def _candidates_for(index: FingerprintIndex, ordinal: int, rank: np.ndarray,
                    min_hits: int) -> list[MatchCandidate]:
    """Score every candidate whose id sorts after the query's (each unordered pair once)."""
    fp = index.fingerprint_of(ordinal)
    if len(fp) == 0:
        return []
    cand, offsets, qframes = _gather(index, fp.hashes, fp.frames)
    keep = rank[cand] > rank[ordinal]
    cand, offsets, qframes = cand[keep], offsets[keep], qframes[keep]
    if cand.shape[0] == 0:
        return []
    order = np.argsort(cand, kind="stable")
    cand, offsets, qframes = cand[order], offsets[order], qframes[order]
    uniq, starts, counts = np.unique(cand, return_index=True, return_counts=True)
    qid = index.rec_table[ordinal].id
    out = []
    for c, s, n in zip(uniq.tolist(), starts.tolist(), counts.tolist()):
        if n < min_hits:
            continue
        pair = (qid, index.rec_table[c].id)
        out.append(score_arrays(pair, offsets[s : s + n], qframes[s : s + n], index.params))
    return out


def candidate_pairs(index: FingerprintIndex, min_hits: int = 1, threads: int = 1) -> list[MatchCandidate]:
    """Score all recording pairs with at least ``min_hits`` shared hashes.

    The lexicographically smaller id is always the query, so pair scores do not
    depend on catalog order.
    """
    ids = [e.id for e in index.rec_table]
    rank = np.empty(len(ids), dtype=np.int64)
    rank[np.argsort(np.array(ids, dtype=object), kind="stable")] = np.arange(len(ids))

    def work(o: int) -> list[MatchCandidate]:
        return _candidates_for(index, o, rank, min_hits)

    ordinals = range(len(ids))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(work, ordinals))
    else:
        chunks = [work(o) for o in ordinals]
    out = [mc for chunk in chunks for mc in chunk]
    out.sort(key=lambda mc: mc.pair)
    return out


def find_duplicates(index: FingerprintIndex, catalog: Catalog | None = None,
                    min_score: int = DEFAULT_MIN_SCORE, min_coverage: float = DEFAULT_MIN_COVERAGE,
                    threads: int = 1) -> list[DuplicatePair]:
    if catalog is not None:
        missing = [e.id for e in index.rec_table if e.id not in catalog]
        if missing:
            raise IntegrityError(f"index holds {len(missing)} ids absent from the catalog, e.g. {missing[0]!r}")
    # score >= min_score needs at least min_score hits, so thinner pairs are never scored
    cands = candidate_pairs(index, min_hits=max(1, min_score), threads=threads)
    seen: set[tuple[str, str]] = set()
    out = []
    for mc in cands:
        if not accept_pair(mc, min_score, min_coverage) or mc.pair in seen:
            continue
        seen.add(mc.pair)
        out.append(DuplicatePair(mc.pair[0], mc.pair[1], mc.score, mc.coverage, mc.best_offset_frames,
                                 index.params.frame_to_seconds(mc.best_offset_frames)))
    logger.info("%d candidate pairs scored, %d accepted", len(cands), len(out))
    return out


def dump_pairs(pairs: Iterable[DuplicatePair]) -> str:
    return "".join(p.to_json() + "\n" for p in pairs)


def parse_pairs(text: str) -> list[DuplicatePair]:
    """Read pairs.jsonl; only ``a`` and ``b`` are required, so hand-made pair lists load too."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            out.append(DuplicatePair.from_dict(d))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise IntegrityError(f"pairs line {lineno}: {e}") from e
        if out[-1].a == out[-1].b:
            raise IntegrityError(f"pairs line {lineno}: self-pair {out[-1].a!r}")
    return out

