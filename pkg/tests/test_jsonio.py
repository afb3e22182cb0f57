import gzip
import json
import os

import pytest

from builders import CT, PLAYERS, R, T, TR, VARS, header, match_events, round_events
from conftest import golden
from demoforge import model as m
from demoforge.codec import write_demo
from demoforge.jsonio import emit_json, gzip_bytes, load_json, to_dict, write_json
from demoforge.parser import DemoParser, parse_demo

TOP_KEYS = ["mapName", "tickRate", "demoVersion", "sourceFile", "schemaVersion", "parserParameters", "serverVars",
            "players", "cleaning", "gameRounds"]
EVENT_ARRAYS = ["damages", "kills", "flashes", "bombEvents", "grenades", "weaponFires"]


def _fixture_demo() -> bytes:
    first, nxt = round_events(1, 0, CT, R.EliminationOfT, (1, 0), live_secs=10)
    second, _ = round_events(2, nxt, T, R.BombExploded, (1, 1))
    second.insert(4, m.GrenadeThrow(second[3].tick, 7, m.GrenadeType.Smoke, (0.0, 0.0, 0.0), (5.0, 5.0, 0.0)))
    second.insert(4, m.Flash(second[3].tick, 6, 2, 1.5))
    second.insert(4, m.WeaponFire(second[3].tick, 8, (0.0, -1.0, 0.0), 9))
    return write_demo(header(), [m.MatchStart(0)] + first + second)


def test_empty_match_has_no_rounds():
    doc = m.DemoDocument(m.MatchMeta("de_test", TR), VARS, m.ParserParams(), (), PLAYERS)
    d = json.loads(emit_json(doc))
    assert d["gameRounds"] == []
    assert list(d) == TOP_KEYS


def test_header_only_demo_parses_to_empty_document():
    doc = parse_demo(write_demo(header(), []))
    assert doc.game_rounds == () and load_json(emit_json(doc)) == doc


def test_round_layout():
    doc = parse_demo(_fixture_demo(), m.ParserParams(parse_rate=1))
    d = to_dict(doc)
    assert [r["roundNum"] for r in d["gameRounds"]] == [1, 2]
    r = d["gameRounds"][1]
    for key in EVENT_ARRAYS + ["frames"]:
        assert isinstance(r[key], list)
    assert [e["type"] for e in r["bombEvents"]] == ["BombPlant", "BombExplode"]
    assert d["parserParameters"] == {"parseRate": 1, "dropIncompleteRounds": True}
    assert d["serverVars"]["bombTimerSecs"] == 40


def test_json_roundtrip_is_a_fixpoint(small_doc):
    text = emit_json(small_doc)
    back = load_json(text)
    assert back == small_doc
    assert emit_json(back) == text


def test_numbers_use_shortest_repr(small_doc):
    text = emit_json(small_doc)
    x = small_doc.game_rounds[0].frames[3].ct.players[0].pos[0]
    assert repr(x) in text
    assert "NaN" not in text and "Infinity" not in text


def test_golden_document():
    text = emit_json(parse_demo(_fixture_demo(), m.ParserParams(parse_rate=1)))
    assert text == golden("fixture.json", text)


def test_gzip_output_is_deterministic(tmp_path, small_doc):
    a, b = tmp_path / "a.json.gz", tmp_path / "b.json.gz"
    write_json(small_doc, a)
    write_json(small_doc, b)
    assert a.read_bytes() == b.read_bytes()
    assert gzip.decompress(a.read_bytes()).decode() == emit_json(small_doc)
    assert load_json(str(a)) == small_doc
    assert gzip_bytes(b"x") == gzip_bytes(b"x")


def test_plain_write_is_atomic_and_readable(tmp_path, small_doc):
    path = tmp_path / "doc.json"
    write_json(small_doc, path)
    assert path.read_text(encoding="utf-8") == emit_json(small_doc)
    assert [p.name for p in tmp_path.iterdir()] == ["doc.json"]
    assert os.stat(path).st_mode & 0o044  # not private to the writer


def test_demo_parser_wrapper(tmp_path, small_match):
    path = tmp_path / "m.esdm"
    path.write_bytes(small_match[3])
    doc = DemoParser(str(path), parse_rate=2).parse()
    assert doc.meta.source_file == "m.esdm"
    assert len(doc.game_rounds) == 6


def test_load_rejects_bad_documents():
    with pytest.raises((ValueError, KeyError)):
        load_json("{}")
    assert match_events([CT])  # builders sanity
