import datetime as dt
import json
import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from leakaudit.errors import IntegrityError, ManifestParseError
from leakaudit.manifest import (
    Recording,
    SessionKey,
    canonical_name,
    dump_manifest,
    extract_topic,
    parse_lines,
    parse_manifest,
    session_key,
    validate_manifest,
)


def _line(**kw):
    rec = {"id": "a", "audio_path": "a.wav", "description": "x", "primary_category": "Animals"}
    rec.update(kw)
    return json.dumps(rec)


def test_three_line_manifest(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text("".join(_line(id=i) + "\n" for i in "abc"))
    cat = parse_manifest(p)
    assert len(cat) == 3
    assert cat.index == {"a": 0, "b": 1, "c": 2}
    assert cat.ids == ["a", "b", "c"]
    assert cat.resolve_audio(cat["b"]) == tmp_path / "a.wav"


def test_duplicate_id_rejected():
    with pytest.raises(IntegrityError, match="'x'"):
        parse_lines([_line(id="x"), _line(id="x")])


def test_malformed_line_reports_line_number():
    with pytest.raises(ManifestParseError) as ei:
        parse_lines([_line(id="a"), "{not json"])
    assert ei.value.line == 2


@pytest.mark.parametrize("bad", [
    {"primary_category": 3},
    {"extra_categories": "Birds"},
    {"recordists": "Graham Ross"},
    {"source_archive": "BBC"},
    {"duration_s": "long"},
])
def test_schema_violations(bad):
    with pytest.raises(ManifestParseError):
        parse_lines([_line(**bad)])


def test_missing_key():
    with pytest.raises(ManifestParseError, match="audio_path"):
        parse_lines([json.dumps({"id": "a", "description": "x", "primary_category": "c"})])


def test_empty_category_is_integrity_error():
    with pytest.raises(IntegrityError):
        parse_lines([_line(primary_category="  ")])


def test_defaults_and_lenient_dates():
    cat = parse_lines([_line(date="31/05/1977"), _line(id="b", date="1977-05-31")])
    assert cat["a"].extra_categories == ()
    assert cat["a"].recording_date is None
    assert cat["a"].source_archive == "OTHER"
    assert cat["b"].recording_date == dt.date(1977, 5, 31)


def test_validate_collects_every_error(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text("\n".join([_line(id="a"), "oops", _line(id="a"), _line(id="b")]) + "\n")
    count, errors = validate_manifest(p)
    assert count == 2
    assert len(errors) == 2
    assert "line 2" in errors[0] and "'a'" in errors[1]


@pytest.mark.parametrize("desc, topic", [
    ("Camel Market - close-up mournful calls from camel. background voices in crowd.", "Camel Market"),
    ("Green Tree Frog (Hyla Cinerea) - Chorus close-up with crickets", "Green Tree Frog (Hyla Cinerea)"),
    ("Rajasthan Musicians - medium close-up playing of flutes.", "Rajasthan Musicians"),
    ("no separator here", None),
    ("close-up hum from fly hovering", None),
    (" - body only", None),
    ("Topic  -  two spaces - more", "Topic"),
])
def test_extract_topic(desc, topic):
    assert extract_topic(desc) == topic


@given(st.text(min_size=1))
def test_topic_never_contains_its_separator(desc):
    topic = extract_topic(desc)
    if topic is not None:
        assert topic and topic == topic.strip()
        assert re.search(r"\s-\s", topic) is None
        assert desc.lstrip().startswith(topic)


@given(st.text())
def test_name_canonicalization_idempotent(name):
    assert canonical_name(canonical_name(name)) == canonical_name(name)


def _rec(**kw):
    base = dict(id="r", audio_path="r.wav", description="x", primary_category="Nature")
    base.update(kw)
    return Recording(**base)


def test_session_key_table_rows():
    frog = _rec(recording_date=dt.date(1977, 5, 31), recordists=("Lyndon Bird",),
                description="Green Tree Frog (Hyla Cinerea) - Chorus close-up with crickets and distant traffic")
    assert session_key(frog) == SessionKey(dt.date(1977, 5, 31), ("lyndon bird",), "Green Tree Frog (Hyla Cinerea)")
    music = _rec(recording_date=dt.date(1996, 11, 21), recordists=("Graham Ross",),
                 description="Rajasthan Musicians - medium close-up playing of flutes. Also sounds of drumming.")
    assert session_key(music) == SessionKey(dt.date(1996, 11, 21), ("graham ross",), "Rajasthan Musicians")


def test_session_key_missing_fields():
    assert session_key(_rec(recordists=("A",), description="T - b")) is None
    assert session_key(_rec(recording_date=dt.date(2000, 1, 1), description="T - b")) is None
    assert session_key(_rec(recording_date=dt.date(2000, 1, 1), recordists=("  ",), description="T - b")) is None
    assert session_key(_rec(recording_date=dt.date(2000, 1, 1), recordists=("A",), description="no topic")) is None


def test_session_key_ignores_body_and_name_noise():
    a = _rec(recording_date=dt.date(1996, 11, 21), recordists=("Graham  Ross", "roy horton"),
             description="Camel Market - close-up mournful calls from camel.")
    b = _rec(recording_date=dt.date(1996, 11, 21), recordists=(" Roy Horton", "GRAHAM ROSS"),
             description="Camel Market - close-up calls from camel. Sounds of crowd & individual voices.")
    assert session_key(a) == session_key(b)
    assert session_key(a).recordists == ("graham ross", "roy horton")


recordings = st.builds(
    Recording,
    id=st.text(min_size=1, max_size=8),
    audio_path=st.text(max_size=10),
    description=st.text(max_size=30),
    primary_category=st.text(min_size=1, max_size=6).filter(str.strip),
    extra_categories=st.lists(st.text(max_size=5), max_size=3).map(tuple),
    duration_s=st.none() | st.floats(0, 1e4, allow_nan=False),
    recording_date=st.none() | st.dates(),
    recordists=st.none() | st.lists(st.text(max_size=6), max_size=3).map(tuple),
    source_archive=st.sampled_from(["NHU", "OTHER"]),
)


@given(st.lists(recordings, max_size=6, unique_by=lambda r: r.id))
def test_jsonl_round_trip(recs):
    from leakaudit.manifest import Catalog

    cat = Catalog.from_recordings(recs)
    again = parse_lines(dump_manifest(cat).split("\n"))
    assert again == cat
    assert again.index == cat.index
