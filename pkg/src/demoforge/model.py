"""Domain types: match metadata, events, frames, rounds and documents.

Every type here is an immutable value. Sequences are stored as tuples so
instances can be hashed, compared field by field and shared freely.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

from .errors import InvalidTeam

Vec3 = tuple[float, float, float]
ZERO3: Vec3 = (0.0, 0.0, 0.0)


class Side(enum.IntEnum):
    CT = 0
    T = 1

    @property
    def other(self) -> "Side":
        return Side.T if self is Side.CT else Side.CT


class Phase(enum.IntEnum):
    Freeze = 0
    Default = 1
    BombPlanted = 2
    RoundEnd = 3


LEGAL_TRANSITIONS = frozenset(
    {
        (Phase.Freeze, Phase.Default),
        (Phase.Default, Phase.BombPlanted),
        (Phase.Default, Phase.RoundEnd),
        (Phase.BombPlanted, Phase.RoundEnd),
        (Phase.RoundEnd, Phase.Freeze),
    }
)


class RoundEndReason(enum.IntEnum):
    EliminationOfT = 0
    EliminationOfCT = 1
    BombDefused = 2
    BombExploded = 3
    TargetSaved = 4


_REASON_WINNER = {
    RoundEndReason.EliminationOfT: Side.CT,
    RoundEndReason.BombDefused: Side.CT,
    RoundEndReason.TargetSaved: Side.CT,
    RoundEndReason.EliminationOfCT: Side.T,
    RoundEndReason.BombExploded: Side.T,
}


def winner_for(reason: RoundEndReason) -> Side:
    return _REASON_WINNER[reason]


class BombSite(enum.IntEnum):
    A = 0
    B = 1


class GrenadeType(enum.IntEnum):
    HE = 0
    Smoke = 1
    Molotov = 2
    Flashbang = 3
    Decoy = 4


# Weapon codes are opaque to the parser; the table only labels them.
WEAPON_NAMES = {
    0: "knife",
    1: "glock",
    2: "usp",
    3: "deagle",
    4: "mp9",
    5: "mac10",
    6: "famas",
    7: "galil",
    8: "m4a1",
    9: "ak47",
    10: "awp",
    11: "hegrenade",
    12: "molotov",
    13: "c4",
}


@dataclass(frozen=True, slots=True)
class MatchMeta:
    map_name: str
    tick_rate: int
    demo_version: int = 1
    source_file: str = ""

    def __post_init__(self):
        if self.tick_rate < 1:
            raise ValueError("tick_rate must be >= 1")
        if not self.map_name:
            raise ValueError("map_name must be non-empty")


@dataclass(frozen=True, slots=True)
class ServerVars:
    """Game-rule timings in seconds plus regulation round counts."""

    freeze_time_secs: int = 20
    round_time_secs: int = 115
    bomb_timer_secs: int = 40
    round_end_secs: int = 5
    max_regulation_rounds: int = 30
    side_switch_after: int = 15
    fire_lifetime_secs: float = 7.0
    smoke_lifetime_secs: float = 18.0

    def __post_init__(self):
        for name in ("freeze_time_secs", "round_time_secs", "bomb_timer_secs", "round_end_secs",
                     "max_regulation_rounds", "side_switch_after"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.fire_lifetime_secs <= 0 or self.smoke_lifetime_secs <= 0:
            raise ValueError("grenade lifetimes must be positive")
        if self.side_switch_after >= self.max_regulation_rounds:
            raise ValueError("side_switch_after must be below max_regulation_rounds")

    @property
    def clinch_score(self) -> int:
        return self.max_regulation_rounds // 2 + 1


@dataclass(frozen=True, slots=True)
class ParserParams:
    parse_rate: int = 2
    drop_incomplete_rounds: bool = True

    def __post_init__(self):
        if self.parse_rate < 1:
            raise ValueError("parse_rate must be >= 1")


@dataclass(frozen=True, slots=True)
class PlayerInfo:
    player_id: int
    name: str
    start_side: Side


class PlayerState(NamedTuple):
    """One player's state at a tick.

    A NamedTuple rather than a dataclass: demos carry one of these per player
    per update, and tuple construction is several times cheaper.
    """

    player_id: int
    side: Side
    pos: Vec3
    vel: Vec3
    view_yaw: float
    view_pitch: float
    hp: int
    armor: int
    money: int
    eq_val: int
    active_weapon: int
    ping: int
    blinded: bool = False
    in_bomb_zone: bool = False
    has_helmet: bool = False
    has_defuse_kit: bool = False
    has_bomb: bool = False
    grenades_remaining: int = 0

    @property
    def alive(self) -> bool:
        return self.hp > 0


# --- events -----------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Damage:
    tick: int
    attacker_id: int
    victim_id: int
    attacker_pos: Vec3
    victim_pos: Vec3
    hp_damage: int
    weapon: int


@dataclass(frozen=True, slots=True)
class Kill:
    tick: int
    attacker_id: int
    victim_id: int
    attacker_pos: Vec3
    victim_pos: Vec3
    weapon: int
    headshot: bool


@dataclass(frozen=True, slots=True)
class Flash:
    tick: int
    attacker_id: int
    victim_id: int
    flash_duration_secs: float


@dataclass(frozen=True, slots=True)
class BombPlant:
    tick: int
    player_id: int
    site: BombSite
    pos: Vec3


@dataclass(frozen=True, slots=True)
class BombDefuse:
    tick: int
    player_id: int


@dataclass(frozen=True, slots=True)
class BombExplode:
    tick: int


@dataclass(frozen=True, slots=True)
class GrenadeThrow:
    tick: int
    player_id: int
    grenade_type: GrenadeType
    throw_pos: Vec3
    land_pos: Vec3


@dataclass(frozen=True, slots=True)
class WeaponFire:
    tick: int
    player_id: int
    pos: Vec3
    weapon: int


class PlayerUpdate:
    """A player's full state at a tick.

    Hand-written rather than a dataclass so that the codec can hand out
    records whose state is decoded only when first read (see
    ``codec.LazyPlayerUpdate``); demos are dominated by these records.
    """

    __slots__ = ("tick", "_state")

    def __init__(self, tick: int, state: PlayerState):
        object.__setattr__(self, "tick", tick)
        object.__setattr__(self, "_state", state)

    @property
    def state(self) -> PlayerState:
        return self._state

    @property
    def player_id(self) -> int:
        return self.state.player_id

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def __eq__(self, other):
        if not isinstance(other, PlayerUpdate):
            return NotImplemented
        return self.tick == other.tick and self.state == other.state

    def __hash__(self):
        return hash((self.tick, self.state))

    def __repr__(self):
        return f"PlayerUpdate(tick={self.tick!r}, state={self.state!r})"


@dataclass(frozen=True, slots=True)
class PhaseChange:
    tick: int
    phase: Phase


@dataclass(frozen=True, slots=True)
class RoundStart:
    tick: int
    round_num: int


@dataclass(frozen=True, slots=True)
class RoundEnd:
    """Server round-end broadcast; scores are the server's recorded tally."""

    tick: int
    winner: Side
    reason: RoundEndReason
    ct_score: int = 0
    t_score: int = 0


@dataclass(frozen=True, slots=True)
class MatchStart:
    tick: int


@dataclass(frozen=True, slots=True)
class RestartMarker:
    tick: int


BombEvent = Union[BombPlant, BombDefuse, BombExplode]
GameEvent = Union[
    Damage, Kill, Flash, BombPlant, BombDefuse, BombExplode, GrenadeThrow, WeaponFire,
    PlayerUpdate, PhaseChange, RoundStart, RoundEnd, MatchStart, RestartMarker,
]
ACTION_TYPES = ("damages", "kills", "flashes", "bombEvents", "grenades", "weaponFires")

_CATEGORY = {
    Damage: "damages",
    Kill: "kills",
    Flash: "flashes",
    BombPlant: "bombEvents",
    BombDefuse: "bombEvents",
    BombExplode: "bombEvents",
    GrenadeThrow: "grenades",
    WeaponFire: "weaponFires",
}


def action_category(event: GameEvent) -> Optional[str]:
    """Name of the action list an event belongs to, or None for state records."""
    return _CATEGORY.get(type(event))


# --- frames -----------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class TeamState:
    side: Side
    players: tuple[PlayerState, ...]
    alive_count: int
    total_hp: int
    total_armor: int
    total_eq_val: int
    helmets: int
    defuse_kits: int
    grenades: int
    players_in_bomb_zone: int


def recompute_team_aggregates(players) -> TeamState:
    """Build a TeamState whose aggregates sum over the alive players only."""
    players = tuple(sorted(players))  # PlayerState tuples order by player_id first
    if not players:
        raise InvalidTeam("a team needs at least one player")
    side = players[0].side
    alive = hp = armor = eq = helmets = kits = nades = zone = 0
    for p in players:
        if p.side is not side:
            raise InvalidTeam(f"players from both sides in one team: {[q.player_id for q in players]}")
        if p.hp > 0:
            alive += 1
            hp += p.hp
            armor += p.armor
            eq += p.eq_val
            helmets += p.has_helmet
            kits += p.has_defuse_kit
            nades += p.grenades_remaining
            zone += p.in_bomb_zone
    return TeamState(side, players, alive, hp, armor, eq, helmets, kits, nades, zone)


@dataclass(frozen=True, slots=True)
class BombState:
    carrier_id: Optional[int] = None
    planted_site: Optional[BombSite] = None
    plant_tick: Optional[int] = None


class MapEffect(NamedTuple):
    """An active fire or smoke at a position, live until expiry_tick inclusive."""

    pos: Vec3
    expiry_tick: int


@dataclass(frozen=True, slots=True)
class Frame:
    tick: int
    clock_secs: float
    phase: Phase
    seconds_since_phase_change: float
    bomb: BombState
    fires: tuple[MapEffect, ...]
    smokes: tuple[MapEffect, ...]
    ct: TeamState
    t: TeamState

    def team(self, side: Side) -> TeamState:
        return self.ct if side is Side.CT else self.t

    @property
    def players(self) -> tuple[PlayerState, ...]:
        return self.ct.players + self.t.players


# --- rounds and documents ---------------------------------------------------

@dataclass(frozen=True, slots=True)
class GameRound:
    round_num: int
    start_tick: int
    freeze_end_tick: int
    bomb_plant_tick: Optional[int]
    end_tick: int
    official_end_tick: int
    winner: Side
    reason: RoundEndReason
    ct_score: int
    t_score: int
    ct_start_eq_val: int
    t_start_eq_val: int
    player_sides: tuple[tuple[int, Side], ...] = ()
    damages: tuple[Damage, ...] = ()
    kills: tuple[Kill, ...] = ()
    flashes: tuple[Flash, ...] = ()
    bomb_events: tuple[BombEvent, ...] = ()
    grenades: tuple[GrenadeThrow, ...] = ()
    weapon_fires: tuple[WeaponFire, ...] = ()
    frames: tuple[Frame, ...] = ()
    invalid_reasons: tuple[str, ...] = ()
    # Full event span kept for re-sampling; never serialized.
    raw_events: tuple = field(default=(), compare=False, repr=False)

    def events(self, category: str) -> tuple:
        return {
            "damages": self.damages,
            "kills": self.kills,
            "flashes": self.flashes,
            "bombEvents": self.bomb_events,
            "grenades": self.grenades,
            "weaponFires": self.weapon_fires,
        }[category]

    def side_of(self, player_id: int) -> Optional[Side]:
        for pid, side in self.player_sides:
            if pid == player_id:
                return side
        return None


@dataclass(frozen=True, slots=True)
class Trajectory:
    player_id: int
    round_num: int
    samples: tuple[tuple[int, Vec3], ...]


@dataclass(frozen=True, slots=True)
class CleaningReport:
    skipped_records: int = 0
    discarded_before_restart: int = 0
    orphan_round_ends: int = 0
    duplicate_round_ends: int = 0
    incomplete_rounds: int = 0
    illegal_phase_transitions: int = 0
    invalid_rounds: int = 0
    outcome_conflicts: int = 0
    score_repairs: int = 0
    rounds_after_clinch: int = 0


@dataclass(frozen=True, slots=True)
class DemoDocument:
    meta: MatchMeta
    server_vars: ServerVars
    parser_params: ParserParams
    game_rounds: tuple[GameRound, ...]
    players: tuple[PlayerInfo, ...] = ()
    cleaning: CleaningReport = CleaningReport()

    @property
    def map_name(self) -> str:
        return self.meta.map_name

    @property
    def tick_rate(self) -> int:
        return self.meta.tick_rate
