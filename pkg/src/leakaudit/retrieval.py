"""Recall@k over externally produced query-item similarity scores."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import IntegrityError

DEFAULT_KS = (1, 5, 10)


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    queries: tuple[str, ...]
    items: tuple[str, ...]
    scores: np.ndarray
    ground_truth: dict[str, str]
    _item_pos: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "scores", scores)
        if scores.shape != (len(self.queries), len(self.items)):
            raise IntegrityError(f"score matrix shape {scores.shape} != ({len(self.queries)}, {len(self.items)})")
        if len(set(self.queries)) != len(self.queries) or len(set(self.items)) != len(self.items):
            raise IntegrityError("query and item id lists must be duplicate-free")
        if not np.all(np.isfinite(scores)):
            raise IntegrityError("similarity scores must be finite")
        pos = {rid: i for i, rid in enumerate(self.items)}
        for q in self.queries:
            if q not in self.ground_truth:
                raise IntegrityError(f"query {q!r} has no ground-truth item")
            if self.ground_truth[q] not in pos:
                raise IntegrityError(f"ground truth {self.ground_truth[q]!r} of query {q!r} is not an item")
        object.__setattr__(self, "_item_pos", pos)

    def truth_ranks(self) -> np.ndarray:
        """1-based rank of each query's true item; score ties are ordered by ascending item id."""
        truth_col = np.array([self._item_pos[self.ground_truth[q]] for q in self.queries], dtype=np.int64)
        id_rank = np.empty(len(self.items), dtype=np.int64)
        id_rank[np.argsort(np.array(self.items, dtype=object), kind="stable")] = np.arange(len(self.items))
        rows = np.arange(len(self.queries))
        truth_score = self.scores[rows, truth_col][:, None]
        above = (self.scores > truth_score).sum(axis=1)
        tied_before = ((self.scores == truth_score) & (id_rank[None, :] < id_rank[truth_col][:, None])).sum(axis=1)
        return 1 + above + tied_before

    def subset(self, query_ids: Iterable[str]) -> SimilarityMatrix:
        """Restrict the queries; every item stays in the ranking."""
        qpos = {q: i for i, q in enumerate(self.queries)}
        wanted = list(dict.fromkeys(query_ids))
        missing = [q for q in wanted if q not in qpos]
        if missing:
            raise IntegrityError(f"subset id {missing[0]!r} is not among the queries")
        rows = [qpos[q] for q in wanted]
        return SimilarityMatrix(tuple(wanted), self.items, self.scores[rows], self.ground_truth)


def recall_at_k(sim: SimilarityMatrix, k: int) -> float:
    if not 1 <= k <= len(sim.items):
        raise ValueError(f"k={k} outside 1..{len(sim.items)}")
    if not sim.queries:
        return 0.0
    return 100.0 * float(np.mean(sim.truth_ranks() <= k))


@dataclass(frozen=True)
class EvalReport:
    recall_at: dict[int, float]
    n_queries: int
    subset_name: str = "full"

    def to_dict(self) -> dict:
        return {
            "subset": self.subset_name,
            "n_queries": self.n_queries,
            "recall_at": {str(k): round(v, 1) for k, v in sorted(self.recall_at.items())},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> EvalReport:
        return cls({int(k): float(v) for k, v in d["recall_at"].items()}, int(d.get("n_queries", 0)),
                   str(d.get("subset", "full")))


def full_report(sim: SimilarityMatrix, ks: Sequence[int] = DEFAULT_KS, name: str = "full") -> EvalReport:
    ranks = sim.truth_ranks()
    for k in ks:
        if not 1 <= k <= len(sim.items):
            raise ValueError(f"k={k} outside 1..{len(sim.items)}")
    recall = {k: 100.0 * float(np.mean(ranks <= k)) if ranks.size else 0.0 for k in ks}
    return EvalReport(recall, len(sim.queries), name)


def subset_report(sim: SimilarityMatrix, subset: Iterable[str], ks: Sequence[int] = DEFAULT_KS,
                  name: str = "subset") -> EvalReport:
    return full_report(sim.subset(subset), ks, name)


@dataclass(frozen=True)
class DeltaTable:
    a: str
    b: str
    delta: dict[int, float]

    def to_dict(self) -> dict:
        return {"from": self.a, "to": self.b, "delta": {str(k): v for k, v in sorted(self.delta.items())}}

    def to_text(self) -> str:
        head = "  ".join(f"R@{k:<6d}" for k in sorted(self.delta))
        vals = "  ".join(f"{self.delta[k]:+7.1f}" for k in sorted(self.delta))
        return f"{self.a} -> {self.b}\n{head}\n{vals}\n"


def compare_reports(a: EvalReport, b: EvalReport) -> DeltaTable:
    """Per-k change b - a, on the one-decimal values that reports publish."""
    if set(a.recall_at) != set(b.recall_at):
        raise ValueError(f"k sets differ: {sorted(a.recall_at)} vs {sorted(b.recall_at)}")
    delta = {k: round(round(b.recall_at[k], 1) - round(a.recall_at[k], 1), 1) for k in a.recall_at}
    return DeltaTable(a.subset_name, b.subset_name, delta)


def load_similarity(path: str | Path) -> SimilarityMatrix:
    """Read a JSON similarity file with inline ``scores`` or a ``matrix`` float32 sidecar path."""
    path = Path(path)
    try:
        head = json.loads(path.read_text(encoding="utf-8"))
        queries = tuple(map(str, head["queries"]))
        items = tuple(map(str, head["items"]))
        truth = {str(k): str(v) for k, v in head["ground_truth"].items()}
    except (json.JSONDecodeError, KeyError, AttributeError, TypeError) as e:
        raise IntegrityError(f"malformed similarity header {path}: {e}") from e
    if "scores" in head:
        scores = np.asarray(head["scores"], dtype=np.float64)
    elif "matrix" in head:
        side = path.parent / head["matrix"]
        raw = np.fromfile(side, dtype="<f4")
        if raw.size != len(queries) * len(items):
            raise IntegrityError(f"sidecar {side} holds {raw.size} floats, expected {len(queries) * len(items)}")
        scores = raw.reshape(len(queries), len(items)).astype(np.float64)
    else:
        raise IntegrityError("similarity file needs either 'scores' or 'matrix'")
    return SimilarityMatrix(queries, items, scores, truth)


def save_similarity(sim: SimilarityMatrix, path: str | Path, sidecar: bool = False) -> None:
    path = Path(path)
    head: dict = {"queries": list(sim.queries), "items": list(sim.items), "ground_truth": sim.ground_truth}
    if sidecar:
        side = path.with_suffix(".f32")
        sim.scores.astype("<f4").tofile(side)
        head["matrix"] = side.name
    else:
        head["scores"] = sim.scores.tolist()
    path.write_text(json.dumps(head), encoding="utf-8")
