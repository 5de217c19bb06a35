"""Stratified, group-atomic train/val/test splits, leakage audits and ablation training sets."""

from __future__ import annotations

import csv
import enum
import io
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import __version__
from .errors import InfeasibleSplitError, IntegrityError
from .grouping import GroupAssignment, UnionFind
from .manifest import Catalog


class Split(str, enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


SPLITS = (Split.TRAIN, Split.VAL, Split.TEST)
EVAL_SPLITS = (Split.VAL, Split.TEST)


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
    seed: int = 0
    stratify_on: str = "primary_category"

    def __post_init__(self) -> None:
        if len(self.fractions) != 3 or any(f <= 0 for f in self.fractions):
            raise ValueError("fractions must be three positive numbers")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"fractions sum to {sum(self.fractions)}, not 1")
        if self.stratify_on != "primary_category":
            raise ValueError("only primary_category stratification is supported")


@dataclass
class SplitAssignment:
    split_of: dict[str, Split]
    provenance: dict = field(default_factory=dict)

    def ids(self, split: Split) -> list[str]:
        return [i for i, s in self.split_of.items() if s == split]

    def sizes(self) -> dict[str, int]:
        c = Counter(self.split_of.values())
        return {s.value: c.get(s, 0) for s in SPLITS}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "split"])
        for rid, s in self.split_of.items():
            w.writerow([rid, s.value])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> SplitAssignment:
        rows = csv.reader(io.StringIO(text))
        header = next(rows, None)
        if header != ["id", "split"]:
            raise IntegrityError("splits file must start with the header 'id,split'")
        split_of: dict[str, Split] = {}
        for n, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise IntegrityError(f"splits line {n}: expected 2 columns")
            rid, s = row
            if rid in split_of:
                raise IntegrityError(f"splits line {n}: id {rid!r} assigned twice")
            try:
                split_of[rid] = Split(s)
            except ValueError:
                raise IntegrityError(f"splits line {n}: unknown split {s!r}") from None
        return cls(split_of)


def modal_category(categories: Iterable[str]) -> str:
    counts = Counter(categories)
    top = max(counts.values())
    return min(c for c, n in counts.items() if n == top)


def split_groups(catalog: Catalog, groups: GroupAssignment, spec: SplitSpec = SplitSpec()) -> SplitAssignment:
    """Assign whole groups to splits, balancing item counts per stratum.

    Each group's stratum is its modal primary category. Within a stratum, groups
    go largest first (equal sizes in seeded random order) to whichever split is
    furthest below its item target; deficit ties prefer train, then val.
    """
    n = len(catalog)
    if set(groups.group_of) != set(catalog.ids):
        raise IntegrityError("groups do not cover exactly the catalog")
    limit = spec.fractions[0] * n
    for gid, members in groups.groups.items():
        if len(members) > limit:
            raise InfeasibleSplitError(f"group {gid!r} has {len(members)} members, more than {limit:g} allowed")

    strata: dict[str, list[tuple[str, list[str]]]] = defaultdict(list)
    for gid, members in groups.groups.items():
        strata[modal_category(catalog[m].primary_category for m in members)].append((gid, members))

    rng = np.random.default_rng(spec.seed & 0xFFFFFFFFFFFFFFFF)
    fractions = np.asarray(spec.fractions)
    split_by_group: dict[str, Split] = {}
    for stratum in sorted(strata):
        items = sorted(strata[stratum], key=lambda g: (-len(g[1]), g[0]))
        ordered = []
        start = 0
        while start < len(items):
            end = start
            while end < len(items) and len(items[end][1]) == len(items[start][1]):
                end += 1
            run = items[start:end]
            ordered.extend(run[i] for i in rng.permutation(len(run)))
            start = end
        target = fractions * sum(len(m) for _, m in items)
        assigned = np.zeros(3)
        for gid, members in ordered:
            k = int(np.argmax(target - assigned))
            assigned[k] += len(members)
            split_by_group[gid] = SPLITS[k]

    split_of = {rid: split_by_group[groups.group_of[rid]] for rid in catalog.ids}
    provenance = {
        "fractions": list(spec.fractions),
        "seed": spec.seed,
        "stratify_on": spec.stratify_on,
        "group_mode": groups.mode.value,
        "toolkit_version": __version__,
    }
    return SplitAssignment(split_of, provenance)


@dataclass
class LeakageReport:
    cross_split_pairs: int
    split_sizes: dict[str, int]
    category_distribution: dict[str, dict[str, int]]
    duplicates_in_eval: list[str]
    duplicates_in_test: int = 0
    group_atomicity_violations: int = 0
    unknown_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _pair_ids(p) -> tuple[str, str]:
    return (p.a, p.b) if hasattr(p, "a") else (p[0], p[1])


def audit_leakage(split: SplitAssignment, pairs: Iterable, groups: GroupAssignment | None = None,
                  catalog: Catalog | None = None) -> LeakageReport:
    """Count duplicate pairs straddling train and val/test.

    ``catalog`` adds per-category distributions; ``groups`` adds an atomicity check.
    """
    cross = 0
    in_eval: set[str] = set()
    unknown: set[str] = set()
    for p in pairs:
        a, b = _pair_ids(p)
        sa, sb = split.split_of.get(a), split.split_of.get(b)
        if sa is None or sb is None:
            unknown.update(x for x, s in ((a, sa), (b, sb)) if s is None)
            continue
        if sa == Split.TRAIN and sb in EVAL_SPLITS:
            cross += 1
            in_eval.add(b)
        elif sb == Split.TRAIN and sa in EVAL_SPLITS:
            cross += 1
            in_eval.add(a)

    dist: dict[str, dict[str, int]] = {}
    if catalog is not None:
        for s in SPLITS:
            c = Counter(catalog[i].primary_category for i in split.ids(s) if i in catalog)
            dist[s.value] = dict(sorted(c.items()))

    violations = 0
    if groups is not None:
        for members in groups.groups.values():
            if len({split.split_of.get(m) for m in members}) > 1:
                violations += 1

    order = {rid: i for i, rid in enumerate(split.split_of)}
    dupes = sorted(in_eval, key=order.__getitem__)
    return LeakageReport(
        cross_split_pairs=cross,
        split_sizes=split.sizes(),
        category_distribution=dist,
        duplicates_in_eval=dupes,
        duplicates_in_test=sum(1 for d in dupes if split.split_of[d] == Split.TEST),
        group_atomicity_violations=violations,
        unknown_ids=sorted(unknown),
    )


def deduplicated_train(split: SplitAssignment, pairs: Iterable) -> list[str]:
    """Train ids minus every id sharing a pair-graph component with a val/test id."""
    ids = list(split.split_of)
    pos = {rid: i for i, rid in enumerate(ids)}
    uf = UnionFind(len(ids))
    for p in pairs:
        a, b = _pair_ids(p)
        if a in pos and b in pos:
            uf.union(pos[a], pos[b])
    tainted = {uf.find(pos[r]) for r, s in split.split_of.items() if s != Split.TRAIN}
    return [r for r, s in split.split_of.items() if s == Split.TRAIN and uf.find(pos[r]) not in tainted]


def random_reduced_train(split: SplitAssignment, n_remove: int, seed: int) -> list[str]:
    train = split.ids(Split.TRAIN)
    if not 0 <= n_remove <= len(train):
        raise ValueError(f"cannot remove {n_remove} of {len(train)} training items")
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    drop = set(rng.choice(len(train), size=n_remove, replace=False).tolist())
    return [r for i, r in enumerate(train) if i not in drop]


def category_shares(catalog: Catalog, split: SplitAssignment) -> Mapping[str, dict[str, float]]:
    """Per split, each category's share of that split's items (global shares under 'all')."""
    out: dict[str, dict[str, float]] = {}
    everything = Counter(r.primary_category for r in catalog)
    out["all"] = {c: n / len(catalog) for c, n in sorted(everything.items())}
    for s in SPLITS:
        ids = split.ids(s)
        c = Counter(catalog[i].primary_category for i in ids)
        out[s.value] = {cat: c.get(cat, 0) / max(len(ids), 1) for cat in out["all"]}
    return out
