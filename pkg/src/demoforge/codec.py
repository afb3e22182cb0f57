"""Reader and writer for ESDM v1 demo files.

Layout (all integers little-endian)::

    header   "ESDM" | u16 version | u16 tickRate | u8 len + map name
             | 5 x u16 server vars (freeze, round, bomb, roundEnd, sideSwitchAfter)
             | u8 player count | per player: u8 id, u8 len + name, u8 start side
    record   u32 tick | u8 type | u16 payloadLen | payload
    trailer  sentinel record with type 0xFF and an empty payload

Every known record type has its own fixed payload size, so a corrupted
type or length byte can never decode into a different event silently.
Reserved payload bytes must be zero.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator

from . import model as m
from ._util import gc_paused
from .errors import (
    BadMagic,
    CorruptRecord,
    DecodeError,
    TickRegression,
    TruncatedRecord,
    UnencodableEvent,
    UnsupportedVersion,
)

MAGIC = b"ESDM"
VERSION = 1
SENTINEL = 0xFF

_RECORD_HEADER = struct.Struct("<IBH")
RECORD_HEADER_SIZE = _RECORD_HEADER.size  # 7
_CHUNK = 1 << 16

_FLAG_BITS = ("alive", "blinded", "in_bomb_zone", "has_helmet", "has_defuse_kit", "has_bomb")


@dataclass(frozen=True, slots=True)
class EsdmHeader:
    tick_rate: int
    map_name: str
    server_vars: m.ServerVars
    players: tuple[m.PlayerInfo, ...]
    version: int = VERSION


# type code -> (event class, payload layout)
_LAYOUTS = {
    1: (m.Damage, struct.Struct("<BB3f3fBB")),
    2: (m.Kill, struct.Struct("<BB3f3fB?x")),
    3: (m.Flash, struct.Struct("<BBf")),
    4: (m.BombPlant, struct.Struct("<BB3f")),
    5: (m.BombDefuse, struct.Struct("<B")),
    6: (m.BombExplode, struct.Struct("<5x")),
    7: (m.GrenadeThrow, struct.Struct("<BB3f3f")),
    8: (m.WeaponFire, struct.Struct("<B3fBx")),
    9: (m.PlayerUpdate, struct.Struct("<BB3f3fffBBHHBHBB")),
    10: (m.PhaseChange, struct.Struct("<B2x")),
    11: (m.RoundStart, struct.Struct("<H")),
    12: (m.RoundEnd, struct.Struct("<BBBB")),
    13: (m.MatchStart, struct.Struct("<7x")),
    14: (m.RestartMarker, struct.Struct("<9x")),
}
TYPE_CODES = {cls: code for code, (cls, _) in _LAYOUTS.items()}
PAYLOAD_SIZES = {code: layout.size for code, (_, layout) in _LAYOUTS.items()}
assert len(set(PAYLOAD_SIZES.values())) == len(PAYLOAD_SIZES)


_UPDATE = _LAYOUTS[9][1]
_UPDATE_RECORD = struct.Struct("<IBH" + _UPDATE.format[1:])


def _pack_update(tick: int, s: m.PlayerState) -> bytes:
    (pid, side, pos, vel, yaw, pitch, hp, armor, money, eq, weapon, ping,
     blinded, zone, helmet, kit, bomb, nades) = s
    flags = ((hp > 0) | (bool(blinded) << 1) | (bool(zone) << 2) | (bool(helmet) << 3)
             | (bool(kit) << 4) | (bool(bomb) << 5))
    return _UPDATE_RECORD.pack(tick, 9, 45, pid, side, pos[0], pos[1], pos[2], vel[0], vel[1], vel[2],
                               yaw, pitch, hp, armor, money, eq, weapon, ping, flags, nades)


def _pack_fields(ev) -> tuple:
    if isinstance(ev, (m.Damage, m.Kill)):
        last = (ev.hp_damage, ev.weapon) if isinstance(ev, m.Damage) else (ev.weapon, ev.headshot)
        return (ev.attacker_id, ev.victim_id, *ev.attacker_pos, *ev.victim_pos, *last)
    if isinstance(ev, m.Flash):
        return (ev.attacker_id, ev.victim_id, ev.flash_duration_secs)
    if isinstance(ev, m.BombPlant):
        return (ev.player_id, int(ev.site), *ev.pos)
    if isinstance(ev, m.BombDefuse):
        return (ev.player_id,)
    if isinstance(ev, m.GrenadeThrow):
        return (ev.player_id, int(ev.grenade_type), *ev.throw_pos, *ev.land_pos)
    if isinstance(ev, m.WeaponFire):
        return (ev.player_id, *ev.pos, ev.weapon)
    if isinstance(ev, m.PhaseChange):
        return (int(ev.phase),)
    if isinstance(ev, m.RoundStart):
        return (ev.round_num,)
    if isinstance(ev, m.RoundEnd):
        return (int(ev.winner), int(ev.reason), ev.ct_score, ev.t_score)
    return ()


def encode_event(ev: m.GameEvent) -> bytes:
    if type(ev) is LazyPlayerUpdate and ev._state is None:
        return _RECORD_HEADER.pack(ev.tick, 9, 45) + ev._raw  # still undecoded: reuse the bytes
    if type(ev) is m.PlayerUpdate or type(ev) is LazyPlayerUpdate:
        try:
            return _pack_update(ev.tick, ev.state)
        except (struct.error, OverflowError, AttributeError, TypeError) as exc:
            raise UnencodableEvent(f"PlayerUpdate at tick {ev.tick}: {exc}") from None
    try:
        code = TYPE_CODES[type(ev)]
    except KeyError:
        raise UnencodableEvent(f"not an event: {ev!r}") from None
    layout = _LAYOUTS[code][1]
    try:
        payload = layout.pack(*_pack_fields(ev))
        return _RECORD_HEADER.pack(ev.tick, code, len(payload)) + payload
    except (struct.error, OverflowError) as exc:
        raise UnencodableEvent(f"{type(ev).__name__} at tick {ev.tick}: {exc}") from None


def _pstr(text: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 255:
        raise UnencodableEvent(f"string longer than 255 bytes: {text[:20]!r}...")
    return bytes([len(raw)]) + raw


def encode_header(header: EsdmHeader) -> bytes:
    _check_player_table(header.players, UnencodableEvent)
    sv = header.server_vars
    try:
        parts = [
            MAGIC,
            struct.pack("<HH", header.version, header.tick_rate),
            _pstr(header.map_name),
            struct.pack("<5H", sv.freeze_time_secs, sv.round_time_secs, sv.bomb_timer_secs,
                        sv.round_end_secs, sv.side_switch_after),
            bytes([len(header.players)]),
        ]
        for p in header.players:
            parts.append(bytes([p.player_id]) + _pstr(p.name) + bytes([int(p.start_side)]))
    except (struct.error, ValueError) as exc:
        raise UnencodableEvent(f"header: {exc}") from None
    return b"".join(parts)


@gc_paused
def write_demo(header: EsdmHeader, events: Iterable[m.GameEvent], stream: BinaryIO | None = None) -> bytes:
    """Serialize a header and tick-sorted events.

    Returns the encoded bytes; when ``stream`` is given they are also written to it.
    """
    chunks = [encode_header(header)]
    append = chunks.append
    update_cls = m.PlayerUpdate
    last_tick = 0
    for ev in events:
        tick = ev.tick
        if tick < last_tick:
            raise UnencodableEvent(f"events not tick-sorted: {tick} after {last_tick}")
        last_tick = tick
        if type(ev) is update_cls:  # the bulk of any stream
            try:
                append(_pack_update(tick, ev.state))
                continue
            except (struct.error, OverflowError, AttributeError, TypeError):
                pass  # let encode_event report it
        append(encode_event(ev))
    chunks.append(_RECORD_HEADER.pack(last_tick, SENTINEL, 0))
    data = b"".join(chunks)
    if stream is not None:
        stream.write(data)
    return data


def _check_player_table(players, exc_type):
    if len(players) != 10:
        raise exc_type(f"player table must have 10 entries, got {len(players)}")
    if sum(p.start_side == m.Side.CT for p in players) != 5:
        raise exc_type("player table must have 5 players per side")
    if len({p.player_id for p in players}) != 10:
        raise exc_type("duplicate player ids in player table")


# --- reading ----------------------------------------------------------------

def _read_exact(stream: BinaryIO, n: int, what: str) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise TruncatedRecord(f"{what}: wanted {n} bytes, got {len(data)}")
    return data


def _read_pstr(stream: BinaryIO, what: str) -> str:
    (n,) = _read_exact(stream, 1, what)
    try:
        return _read_exact(stream, n, what).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError(f"{what}: {exc}") from None


def read_header(stream: BinaryIO) -> EsdmHeader:
    magic = stream.read(4)
    if magic != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {magic!r}")
    version, tick_rate = struct.unpack("<HH", _read_exact(stream, 4, "header"))
    if version != VERSION:
        raise UnsupportedVersion(f"ESDM version {version} (only {VERSION} is supported)")
    if tick_rate < 1:
        raise DecodeError("tick rate must be positive")
    map_name = _read_pstr(stream, "map name")
    freeze, round_, bomb, round_end, switch = struct.unpack("<5H", _read_exact(stream, 10, "server vars"))
    try:
        sv = m.ServerVars(freeze, round_, bomb, round_end, 2 * switch, switch)
    except ValueError as exc:
        raise DecodeError(f"server vars: {exc}") from None
    (count,) = _read_exact(stream, 1, "player table")
    players = []
    for _ in range(count):
        (pid,) = _read_exact(stream, 1, "player id")
        name = _read_pstr(stream, "player name")
        (side,) = _read_exact(stream, 1, "player side")
        if side > 1:
            raise DecodeError(f"player {pid}: bad side code {side}")
        players.append(m.PlayerInfo(pid, name, m.Side(side)))
    _check_player_table(players, DecodeError)
    return EsdmHeader(tick_rate=tick_rate, map_name=map_name, server_vars=sv,
                      players=tuple(players), version=version)


_ENUM_VALUES = {cls: tuple(cls) for cls in (m.Side, m.Phase, m.RoundEndReason, m.BombSite, m.GrenadeType)}


def _enum(enum_cls, value, code):
    try:
        return _ENUM_VALUES[enum_cls][value]
    except IndexError:
        raise CorruptRecord(f"record type {code}: bad {enum_cls.__name__} value {value}") from None


# reserved bytes per type code, as payload slices that must be all zero
_RESERVED = {2: slice(28, 29), 6: slice(0, 5), 8: slice(14, 15), 10: slice(1, 3),
             13: slice(0, 7), 14: slice(0, 9)}


def decode_payload(code: int, tick: int, payload: bytes) -> m.GameEvent:
    cls, layout = _LAYOUTS[code]
    if len(payload) != layout.size:
        raise CorruptRecord(f"record type {code} expects {layout.size} payload bytes, header says {len(payload)}")
    reserved = _RESERVED.get(code)
    if reserved is not None and any(payload[reserved]):
        raise CorruptRecord(f"record type {code}: reserved bytes are not zero")
    if code == 9:
        return m.PlayerUpdate(tick, _decode_state(_check_update(payload)))
    f = layout.unpack(payload)
    if code == 1:
        return m.Damage(tick, f[0], f[1], f[2:5], f[5:8], f[8], f[9])
    if code == 2:
        if payload[27] > 1:
            raise CorruptRecord(f"kill headshot byte {payload[27]} is not a boolean")
        return m.Kill(tick, f[0], f[1], f[2:5], f[5:8], f[8], f[9])
    if code == 3:
        return m.Flash(tick, *f)
    if code == 4:
        return m.BombPlant(tick, f[0], _enum(m.BombSite, f[1], code), f[2:5])
    if code == 5:
        return m.BombDefuse(tick, f[0])
    if code == 7:
        return m.GrenadeThrow(tick, f[0], _enum(m.GrenadeType, f[1], code), f[2:5], f[5:8])
    if code == 8:
        return m.WeaponFire(tick, f[0], f[1:4], f[4])
    if code == 10:
        return m.PhaseChange(tick, _enum(m.Phase, f[0], code))
    if code == 11:
        return m.RoundStart(tick, f[0])
    if code == 12:
        return m.RoundEnd(tick, _enum(m.Side, f[0], code), _enum(m.RoundEndReason, f[1], code), f[2], f[3])
    return cls(tick)


def _check_update(payload: bytes) -> bytes:
    # everything that can make a PlayerUpdate payload invalid, without unpacking it
    if payload[1] > 1:
        raise CorruptRecord(f"record type 9: bad Side value {payload[1]}")
    flags = payload[43]
    if flags >> len(_FLAG_BITS):
        raise CorruptRecord(f"undefined flag bits set: {flags:#04x}")
    if (flags & 1) != (payload[34] > 0):
        raise CorruptRecord(f"alive flag disagrees with hp={payload[34]}")
    return payload


_SIDES = (m.Side.CT, m.Side.T)
_FLAG_TABLE = tuple(tuple(bool(b & (1 << i)) for i in range(1, 6)) for b in range(64))


def _decode_state(payload: bytes) -> m.PlayerState:
    f = _UPDATE.unpack(payload)
    return m.PlayerState(f[0], _SIDES[f[1]], f[2:5], f[5:8], f[8], f[9], f[10], f[11], f[12], f[13],
                         f[14], f[15], *_FLAG_TABLE[f[16]], f[17])


class LazyPlayerUpdate(m.PlayerUpdate):
    """A decoded PlayerUpdate whose state is unpacked on first access.

    The payload has already passed every integrity check, so deferring the
    unpack cannot hide a decode error.
    """

    __slots__ = ("_raw",)

    def __init__(self, tick: int, payload: bytes):
        object.__setattr__(self, "tick", tick)
        object.__setattr__(self, "_raw", payload)
        object.__setattr__(self, "_state", None)

    @property
    def state(self) -> m.PlayerState:
        st = self._state
        if st is None:
            st = _decode_state(self._raw)
            object.__setattr__(self, "_state", st)
        return st

    @property
    def player_id(self) -> int:
        """Cheap access to the id without decoding the whole state."""
        return self._raw[0]


class DemoReader:
    """Lazy iterator over the records of an ESDM stream.

    Records are decoded one at a time as iteration proceeds. Unknown type
    codes are skipped and tallied in ``skipped``; ``payload_bytes`` counts
    the payload bytes consumed so far.
    """

    def __init__(self, stream: BinaryIO):
        self._stream = stream
        self.skipped = 0
        self.records = 0
        self.payload_bytes = 0
        self.finished = False
        self._last_tick = 0

    def __iter__(self) -> Iterator[m.GameEvent]:
        read = self._stream.read
        unpack_header = _RECORD_HEADER.unpack_from
        check = _check_update
        hs = RECORD_HEADER_SIZE
        buf, pos = b"", 0
        while not self.finished:
            if len(buf) - pos < hs + 64:
                buf, pos = buf[pos:] + read(_CHUNK), 0
                if len(buf) < hs:
                    raise TruncatedRecord(f"stream ended inside a record header after {self.records} records")
            tick, code, size = unpack_header(buf, pos)
            pos += hs
            if tick < self._last_tick:
                raise TickRegression(f"tick {tick} after {self._last_tick} (record {self.records})")
            self._last_tick = tick
            if code == SENTINEL:
                if size != 0:
                    raise CorruptRecord(f"end-of-stream sentinel with payload length {size}")
                if pos < len(buf) or read(1):
                    raise CorruptRecord("data after end-of-stream sentinel")
                self.finished = True
                return
            if len(buf) - pos < size:
                buf, pos = buf[pos:] + read(max(_CHUNK, size)), 0
                if len(buf) < size:
                    raise TruncatedRecord(
                        f"record {self.records} (type {code}) wants {size} bytes, got {len(buf)}")
            payload = buf[pos:pos + size]
            pos += size
            self.payload_bytes += size
            self.records += 1
            if code == 9 and size == 45:
                yield LazyPlayerUpdate(tick, check(payload))
            elif code in _LAYOUTS:
                yield decode_payload(code, tick, payload)
            else:
                self.skipped += 1


def read_demo(stream: BinaryIO | bytes) -> tuple[EsdmHeader, DemoReader]:
    """Decode the header eagerly and return a lazy reader over the records."""
    if isinstance(stream, (bytes, bytearray, memoryview)):
        stream = io.BytesIO(stream)
    header = read_header(stream)
    return header, DemoReader(stream)
