"""Duplicate groups (clean) and metadata session groups (group-filtered) via union-find."""

from __future__ import annotations

import enum
import json
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import IntegrityError
from .manifest import Catalog, SessionKey, session_key


class GroupMode(str, enum.Enum):
    CLEAN = "clean"
    GROUP_FILTERED = "group-filtered"


class UnionFind:
    """Disjoint sets over ordinals 0..n-1 with union by size and path compression.

    >>> uf = UnionFind(4)
    >>> uf.union(0, 1); uf.union(2, 3); uf.union(1, 3)
    >>> uf.find(0) == uf.find(2)
    True
    """

    def __init__(self, n: int) -> None:
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]

    def components(self) -> list[list[int]]:
        out: dict[int, list[int]] = defaultdict(list)
        for x in range(len(self.parent)):
            out[self.find(x)].append(x)
        return list(out.values())


@dataclass(frozen=True)
class GroupAssignment:
    """Partition of the catalog; singletons are size-1 groups named by their member."""

    group_of: dict[str, str]
    groups: dict[str, list[str]]
    mode: GroupMode

    @classmethod
    def from_components(cls, components: Iterable[Iterable[str]], mode: GroupMode) -> GroupAssignment:
        groups = {}
        for comp in components:
            members = sorted(comp)
            groups[members[0]] = members
        groups = dict(sorted(groups.items()))
        group_of = {m: gid for gid, members in groups.items() for m in members}
        return cls(group_of, groups, mode)

    def __len__(self) -> int:
        return len(self.groups)

    def non_singleton(self) -> dict[str, list[str]]:
        return {g: m for g, m in self.groups.items() if len(m) > 1}

    def to_json(self) -> str:
        return json.dumps({"mode": self.mode.value, "groups": self.groups}, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> GroupAssignment:
        try:
            data = json.loads(text)
            mode = GroupMode(data["mode"])
            comps = [list(map(str, m)) for m in data["groups"].values()]
        except (json.JSONDecodeError, KeyError, ValueError, AttributeError) as e:
            raise IntegrityError(f"malformed groups file: {e}") from e
        ga = cls.from_components(comps, mode)
        if sum(len(m) for m in ga.groups.values()) != len(ga.group_of):
            raise IntegrityError("groups file lists a recording in more than one group")
        return ga


def _components(catalog: Catalog, edges: Iterable[tuple[str, str]]) -> list[list[str]]:
    uf = UnionFind(len(catalog))
    for a, b in edges:
        for x in (a, b):
            if x not in catalog:
                raise IntegrityError(f"unknown recording id {x!r} in pair list")
        uf.union(catalog.index[a], catalog.index[b])
    ids = catalog.ids
    return [[ids[i] for i in comp] for comp in uf.components()]


def groups_from_pairs(catalog: Catalog, pairs: Iterable) -> GroupAssignment:
    """Connected components of the duplicate graph; unpaired recordings become singletons.

    ``pairs`` holds DuplicatePair objects or plain (a, b) tuples.
    """
    edges = [(p.a, p.b) if hasattr(p, "a") else tuple(p) for p in pairs]
    return GroupAssignment.from_components(_components(catalog, edges), GroupMode.CLEAN)


def session_groups(catalog: Catalog) -> dict[SessionKey, list[str]]:
    buckets: dict[SessionKey, list[str]] = defaultdict(list)
    for rec in catalog:
        key = session_key(rec)
        if key is not None:
            buckets[key].append(rec.id)
    return {k: sorted(v) for k, v in sorted(buckets.items())}


def merge_group_sources(clean: GroupAssignment, sessions: Mapping[SessionKey, Sequence[str]],
                        catalog: Catalog | None = None) -> GroupAssignment:
    """Union the clean groups with every session bucket."""
    ids = sorted(clean.group_of)
    pos = {rid: i for i, rid in enumerate(ids)}
    uf = UnionFind(len(ids))
    for members in clean.groups.values():
        for m in members[1:]:
            uf.union(pos[members[0]], pos[m])
    for bucket in sessions.values():
        for m in bucket:
            if m not in pos:
                raise IntegrityError(f"session member {m!r} is not in the clean grouping")
        for m in bucket[1:]:
            uf.union(pos[bucket[0]], pos[m])
    if catalog is not None and set(catalog.ids) != set(ids):
        raise IntegrityError("clean groups and catalog cover different recordings")
    comps = [[ids[i] for i in comp] for comp in uf.components()]
    return GroupAssignment.from_components(comps, GroupMode.GROUP_FILTERED)


def session_stats(sessions: Mapping[SessionKey, Sequence[str]]) -> dict[str, int]:
    """Keyed recording counts, both over all buckets and over buckets with >= 2 members."""
    return {
        "keyed_recordings": sum(len(v) for v in sessions.values()),
        "recordings_in_multi_member_sessions": sum(len(v) for v in sessions.values() if len(v) > 1),
        "sessions": len(sessions),
        "multi_member_sessions": sum(1 for v in sessions.values() if len(v) > 1),
    }
