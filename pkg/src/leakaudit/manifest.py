"""Corpus manifest (JSON Lines) parsing and the metadata keys used for session grouping."""

from __future__ import annotations

import datetime as dt
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import IntegrityError, ManifestParseError

REQUIRED_KEYS = ("id", "audio_path", "description", "primary_category")
SOURCE_ARCHIVES = ("NHU", "OTHER")

# "topic - body": a dash with whitespace on both sides; hyphenated words never split
_TOPIC_SEP = re.compile(r"\s-\s")
_WS_RUN = re.compile(r"\s+")
_ISO_DATE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


@dataclass(frozen=True)
class Recording:
    id: str
    audio_path: str
    description: str
    primary_category: str
    extra_categories: tuple[str, ...] = ()
    duration_s: float | None = None
    recording_date: dt.date | None = None
    recordists: tuple[str, ...] | None = None
    source_archive: str = "OTHER"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": self.id,
            "audio_path": self.audio_path,
            "description": self.description,
            "primary_category": self.primary_category,
            "extra_categories": list(self.extra_categories),
            "source_archive": self.source_archive,
        }
        if self.duration_s is not None:
            out["duration_s"] = self.duration_s
        if self.recording_date is not None:
            out["date"] = self.recording_date.isoformat()
        if self.recordists is not None:
            out["recordists"] = list(self.recordists)
        return out


@dataclass(frozen=True)
class Catalog:
    """Ordered, immutable collection of recordings in manifest order."""

    recordings: tuple[Recording, ...]
    index: dict[str, int] = field(compare=False)
    root: Path | None = field(default=None, compare=False)

    @classmethod
    def from_recordings(cls, recordings: Iterable[Recording], root: Path | None = None) -> Catalog:
        recs = tuple(recordings)
        index: dict[str, int] = {}
        for pos, rec in enumerate(recs):
            if rec.id in index:
                raise IntegrityError(f"duplicate recording id {rec.id!r}")
            index[rec.id] = pos
        return cls(recs, index, root)

    def __len__(self) -> int:
        return len(self.recordings)

    def __iter__(self) -> Iterator[Recording]:
        return iter(self.recordings)

    def __contains__(self, rec_id: object) -> bool:
        return rec_id in self.index

    def __getitem__(self, rec_id: str) -> Recording:
        return self.recordings[self.index[rec_id]]

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.recordings]

    def resolve_audio(self, rec: Recording) -> Path:
        path = Path(rec.audio_path)
        if not path.is_absolute() and self.root is not None:
            path = self.root / path
        return path


@dataclass(frozen=True, order=True)
class SessionKey:
    date: dt.date
    recordists: tuple[str, ...]
    topic: str


def parse_date(value: Any) -> dt.date | None:
    """ISO 8601 calendar date, or None for anything else (left ungrouped, not an error)."""
    if not isinstance(value, str) or not _ISO_DATE.match(value.strip()):
        return None
    try:
        return dt.date.fromisoformat(value.strip())
    except ValueError:
        return None


def _record_from_obj(obj: Any, lineno: int) -> Recording:
    if not isinstance(obj, dict):
        raise ManifestParseError(lineno, "record is not a JSON object")
    for key in REQUIRED_KEYS:
        if key not in obj:
            raise ManifestParseError(lineno, f"missing required key {key!r}")
        if not isinstance(obj[key], str):
            raise ManifestParseError(lineno, f"key {key!r} must be a string")
    if not obj["id"]:
        raise ManifestParseError(lineno, "empty id")
    if not obj["primary_category"].strip():
        raise IntegrityError(f"recording {obj['id']!r} has an empty primary_category")

    extra = obj.get("extra_categories") or []
    if not isinstance(extra, list) or not all(isinstance(c, str) for c in extra):
        raise ManifestParseError(lineno, "extra_categories must be an array of strings")

    duration = obj.get("duration_s")
    if duration is not None:
        if isinstance(duration, bool) or not isinstance(duration, (int, float)):
            raise ManifestParseError(lineno, "duration_s must be a number")
        if duration < 0:
            raise IntegrityError(f"recording {obj['id']!r} has negative duration_s")
        duration = float(duration)

    recordists = obj.get("recordists")
    if recordists is not None:
        if not isinstance(recordists, list) or not all(isinstance(r, str) for r in recordists):
            raise ManifestParseError(lineno, "recordists must be an array of strings")
        recordists = tuple(recordists)

    source = obj.get("source_archive", "OTHER")
    if source not in SOURCE_ARCHIVES:
        raise ManifestParseError(lineno, f"source_archive must be one of {SOURCE_ARCHIVES}")

    return Recording(
        id=obj["id"],
        audio_path=obj["audio_path"],
        description=obj["description"],
        primary_category=obj["primary_category"],
        extra_categories=tuple(extra),
        duration_s=duration,
        recording_date=parse_date(obj.get("date")),
        recordists=recordists,
        source_archive=source,
    )


def parse_lines(lines: Iterable[str], root: Path | None = None) -> Catalog:
    recordings = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestParseError(lineno, f"invalid JSON ({e.msg})") from e
        rec = _record_from_obj(obj, lineno)
        if rec.id in seen:
            raise IntegrityError(f"duplicate recording id {rec.id!r} (line {lineno})")
        seen.add(rec.id)
        recordings.append(rec)
    return Catalog.from_recordings(recordings, root)


def parse_manifest(path: str | Path) -> Catalog:
    path = Path(path)
    with path.open(encoding="utf-8", newline="\n") as fh:
        return parse_lines(fh, root=path.resolve().parent)


def dump_manifest(catalog: Catalog) -> str:
    return "".join(json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True) + "\n" for r in catalog)


def extract_topic(description: str) -> str | None:
    """Return the caption prefix before the first isolated dash, or None.

    >>> extract_topic("Camel Market - close-up mournful calls from camel.")
    'Camel Market'
    >>> extract_topic("close-up hum") is None
    True
    """
    m = _TOPIC_SEP.search(description)
    if m is None:
        return None
    topic = description[: m.start()].strip()
    return topic or None


def canonical_name(name: str) -> str:
    return _WS_RUN.sub(" ", name.strip()).casefold()


def canonical_recordists(names: Iterable[str]) -> tuple[str, ...]:
    return tuple(sorted(c for c in (canonical_name(n) for n in names) if c))


def session_key(rec: Recording) -> SessionKey | None:
    if rec.recording_date is None or not rec.recordists:
        return None
    recordists = canonical_recordists(rec.recordists)
    if not recordists:
        return None
    topic = extract_topic(rec.description) if rec.description else None
    if topic is None:
        return None
    return SessionKey(rec.recording_date, recordists, topic)


def validate_manifest(path: str | Path) -> tuple[int, list[str]]:
    """Parse every line, collecting all problems instead of stopping at the first."""
    errors: list[str] = []
    seen: set[str] = set()
    count = 0
    try:
        fh = Path(path).open(encoding="utf-8", newline="\n")
    except OSError as e:
        return 0, [f"cannot open {path}: {e.strerror}"]
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = _record_from_obj(json.loads(line), lineno)
            except json.JSONDecodeError as e:
                errors.append(str(ManifestParseError(lineno, f"invalid JSON ({e.msg})")))
                continue
            except (ManifestParseError, IntegrityError) as e:
                errors.append(str(e))
                continue
            if rec.id in seen:
                errors.append(str(IntegrityError(f"duplicate recording id {rec.id!r} (line {lineno})")))
                continue
            seen.add(rec.id)
            count += 1
    return count, errors
