"""DemoDocument <-> JSON, in the lowerCamelCase layout of ESTA-style documents.

Key order is fixed by construction and floats use Python's shortest
round-trip repr, so equal documents always serialize to identical bytes.
Paths ending in ``.gz`` are gzip-compressed with a zero timestamp.
"""

from __future__ import annotations

import gzip
import io
import json
import os
import tempfile
from typing import Any, Union

from . import model as m

SCHEMA_VERSION = 1

_PLAYER_KEYS = ("playerId", "side", "pos", "vel", "viewYaw", "viewPitch", "hp", "armor", "money", "eqVal",
                "activeWeapon", "ping", "blinded", "inBombZone", "hasHelmet", "hasDefuseKit", "hasBomb",
                "grenadesRemaining")


def _camel(name: str) -> str:
    head, *rest = name.split("_")
    return head + "".join(w.title() for w in rest)


# --- encoding ---------------------------------------------------------------

def _player(p: m.PlayerState) -> dict:
    d = dict(zip(_PLAYER_KEYS, p))
    d["side"] = p.side.name
    d["alive"] = p.hp > 0
    return d


def _team(t: m.TeamState) -> dict:
    return {
        "side": t.side.name,
        "aliveCount": t.alive_count,
        "totalHp": t.total_hp,
        "totalArmor": t.total_armor,
        "totalEqVal": t.total_eq_val,
        "helmets": t.helmets,
        "defuseKits": t.defuse_kits,
        "grenades": t.grenades,
        "playersInBombZone": t.players_in_bomb_zone,
        "players": [_player(p) for p in t.players],
    }


def _frame(f: m.Frame) -> dict:
    b = f.bomb
    return {
        "tick": f.tick,
        "clockSecs": f.clock_secs,
        "phase": f.phase.name,
        "secondsSincePhaseChange": f.seconds_since_phase_change,
        "bomb": {
            "carrierId": b.carrier_id,
            "plantedSite": None if b.planted_site is None else b.planted_site.name,
            "plantTick": b.plant_tick,
        },
        "fires": [{"pos": e.pos, "expiryTick": e.expiry_tick} for e in f.fires],
        "smokes": [{"pos": e.pos, "expiryTick": e.expiry_tick} for e in f.smokes],
        "ct": _team(f.ct),
        "t": _team(f.t),
    }


def _event(ev, tagged: bool = False) -> dict:
    d = {"type": type(ev).__name__} if tagged else {}
    for name in ev.__slots__:
        v = getattr(ev, name)
        d[_camel(name)] = v.name if isinstance(v, (m.Side, m.BombSite, m.GrenadeType, m.RoundEndReason)) else v
    return d


def _round(r: m.GameRound) -> dict:
    return {
        "roundNum": r.round_num,
        "startTick": r.start_tick,
        "freezeEndTick": r.freeze_end_tick,
        "bombPlantTick": r.bomb_plant_tick,
        "endTick": r.end_tick,
        "officialEndTick": r.official_end_tick,
        "winner": r.winner.name,
        "reason": r.reason.name,
        "ctScore": r.ct_score,
        "tScore": r.t_score,
        "ctStartEqVal": r.ct_start_eq_val,
        "tStartEqVal": r.t_start_eq_val,
        "playerSides": {str(pid): side.name for pid, side in r.player_sides},
        "invalidReasons": list(r.invalid_reasons),
        "damages": [_event(e) for e in r.damages],
        "kills": [_event(e) for e in r.kills],
        "flashes": [_event(e) for e in r.flashes],
        "bombEvents": [_event(e, tagged=True) for e in r.bomb_events],
        "grenades": [_event(e) for e in r.grenades],
        "weaponFires": [_event(e) for e in r.weapon_fires],
        "frames": [_frame(f) for f in r.frames],
    }


def to_dict(doc: m.DemoDocument) -> dict:
    sv, pp = doc.server_vars, doc.parser_params
    return {
        "mapName": doc.meta.map_name,
        "tickRate": doc.meta.tick_rate,
        "demoVersion": doc.meta.demo_version,
        "sourceFile": doc.meta.source_file,
        "schemaVersion": SCHEMA_VERSION,
        "parserParameters": {"parseRate": pp.parse_rate, "dropIncompleteRounds": pp.drop_incomplete_rounds},
        "serverVars": {_camel(k): getattr(sv, k) for k in sv.__slots__},
        "players": [{"playerId": p.player_id, "name": p.name, "startSide": p.start_side.name}
                    for p in doc.players],
        "cleaning": {_camel(k): getattr(doc.cleaning, k) for k in doc.cleaning.__slots__},
        "gameRounds": [_round(r) for r in doc.game_rounds],
    }


def emit_json(doc: m.DemoDocument) -> str:
    """Serialize a document to compact, deterministic JSON text."""
    return json.dumps(to_dict(doc), ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def gzip_bytes(data: bytes) -> bytes:
    """Gzip with no timestamp or file name, so output depends on content only."""
    buf = io.BytesIO()
    with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0, filename="") as gz:
        gz.write(data)
    return buf.getvalue()


def write_json(doc: m.DemoDocument, path: Union[str, os.PathLike]) -> None:
    """Write a document atomically; ``.gz`` paths are compressed."""
    path = os.fspath(path)
    data = emit_json(doc).encode("utf-8")
    if path.endswith(".gz"):
        data = gzip_bytes(data)
    _atomic_write(path, data)


def write_bytes_atomic(path: Union[str, os.PathLike], data: bytes) -> None:
    _atomic_write(os.fspath(path), data)


# --- decoding ---------------------------------------------------------------

_ENUM_FIELDS = {
    "winner": m.Side,
    "site": m.BombSite,
    "grenade_type": m.GrenadeType,
    "reason": m.RoundEndReason,
}
_EVENT_TYPES = {cls.__name__: cls for cls in (m.BombPlant, m.BombDefuse, m.BombExplode)}


def _vec(v) -> m.Vec3:
    return (float(v[0]), float(v[1]), float(v[2]))


def _load_event(cls, d: dict):
    args = []
    for name in cls.__slots__:
        v = d[_camel(name)]
        if name in _ENUM_FIELDS:
            v = _ENUM_FIELDS[name][v]
        elif name.endswith("pos"):
            v = _vec(v)
        elif name == "flash_duration_secs":
            v = float(v)
        args.append(v)
    return cls(*args)


def _load_player(d: dict) -> m.PlayerState:
    return m.PlayerState(
        d["playerId"], m.Side[d["side"]], _vec(d["pos"]), _vec(d["vel"]), float(d["viewYaw"]),
        float(d["viewPitch"]), d["hp"], d["armor"], d["money"], d["eqVal"], d["activeWeapon"], d["ping"],
        d["blinded"], d["inBombZone"], d["hasHelmet"], d["hasDefuseKit"], d["hasBomb"], d["grenadesRemaining"],
    )


def _load_team(d: dict) -> m.TeamState:
    return m.TeamState(
        m.Side[d["side"]], tuple(_load_player(p) for p in d["players"]), d["aliveCount"], d["totalHp"],
        d["totalArmor"], d["totalEqVal"], d["helmets"], d["defuseKits"], d["grenades"], d["playersInBombZone"],
    )


def _load_frame(d: dict) -> m.Frame:
    b = d["bomb"]
    return m.Frame(
        tick=d["tick"],
        clock_secs=float(d["clockSecs"]),
        phase=m.Phase[d["phase"]],
        seconds_since_phase_change=float(d["secondsSincePhaseChange"]),
        bomb=m.BombState(b["carrierId"], None if b["plantedSite"] is None else m.BombSite[b["plantedSite"]],
                         b["plantTick"]),
        fires=tuple(m.MapEffect(_vec(e["pos"]), e["expiryTick"]) for e in d["fires"]),
        smokes=tuple(m.MapEffect(_vec(e["pos"]), e["expiryTick"]) for e in d["smokes"]),
        ct=_load_team(d["ct"]),
        t=_load_team(d["t"]),
    )


def _load_round(d: dict) -> m.GameRound:
    return m.GameRound(
        round_num=d["roundNum"],
        start_tick=d["startTick"],
        freeze_end_tick=d["freezeEndTick"],
        bomb_plant_tick=d["bombPlantTick"],
        end_tick=d["endTick"],
        official_end_tick=d["officialEndTick"],
        winner=m.Side[d["winner"]],
        reason=m.RoundEndReason[d["reason"]],
        ct_score=d["ctScore"],
        t_score=d["tScore"],
        ct_start_eq_val=d["ctStartEqVal"],
        t_start_eq_val=d["tStartEqVal"],
        player_sides=tuple(sorted((int(k), m.Side[v]) for k, v in d["playerSides"].items())),
        damages=tuple(_load_event(m.Damage, e) for e in d["damages"]),
        kills=tuple(_load_event(m.Kill, e) for e in d["kills"]),
        flashes=tuple(_load_event(m.Flash, e) for e in d["flashes"]),
        bomb_events=tuple(_load_event(_EVENT_TYPES[e["type"]], e) for e in d["bombEvents"]),
        grenades=tuple(_load_event(m.GrenadeThrow, e) for e in d["grenades"]),
        weapon_fires=tuple(_load_event(m.WeaponFire, e) for e in d["weaponFires"]),
        frames=tuple(_load_frame(f) for f in d["frames"]),
        invalid_reasons=tuple(d.get("invalidReasons", ())),
    )


def from_dict(d: dict) -> m.DemoDocument:
    sv = d["serverVars"]
    pp = d["parserParameters"]
    return m.DemoDocument(
        meta=m.MatchMeta(d["mapName"], d["tickRate"], d["demoVersion"], d.get("sourceFile", "")),
        server_vars=m.ServerVars(**{k: sv[_camel(k)] for k in m.ServerVars.__slots__}),
        parser_params=m.ParserParams(pp["parseRate"], pp["dropIncompleteRounds"]),
        game_rounds=tuple(_load_round(r) for r in d["gameRounds"]),
        players=tuple(m.PlayerInfo(p["playerId"], p["name"], m.Side[p["startSide"]]) for p in d["players"]),
        cleaning=m.CleaningReport(**{k: d["cleaning"][_camel(k)] for k in m.CleaningReport.__slots__}),
    )


def read_json_bytes(path: Union[str, os.PathLike]) -> bytes:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def load_json(source: Union[str, bytes, os.PathLike, Any]) -> m.DemoDocument:
    """Load a document from JSON text/bytes or from a (possibly gzipped) file path."""
    if isinstance(source, os.PathLike) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        source = read_json_bytes(source)
    if isinstance(source, (bytes, bytearray)) and source[:2] == b"\x1f\x8b":
        source = gzip.decompress(source)
    return from_dict(json.loads(source))
