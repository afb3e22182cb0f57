"""Synthetic match generator.

Produces complete matches (header, event stream, ground truth) that obey
the round rules exactly, so the parser can be checked against known
answers and the win-probability benchmark has a known target.

Each round is planned first: team economies are drawn, the winner is drawn
with probability ``sigmoid(2 * skill_gap + state terms)``, and a round-end
reason, death counts and a bomb timeline consistent with that winner are
chosen. The plan is then rendered into per-tick events: a reflecting
random walk for movement, kills with their lethal damage, bomb events and
Poisson-distributed weapon fires, non-lethal damages, flashes and grenades.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import model as m
from ._util import gc_paused
from .codec import EsdmHeader
from .errors import InvalidConfig, UnsupportedKind

R = m.RoundEndReason

MAP_BOUNDS = (-2500.0, 2500.0, -2500.0, 2500.0)
BOMB_SITES = {m.BombSite.A: (1600.0, 1400.0), m.BombSite.B: (-1600.0, 1400.0)}
BOMB_ZONE_RADIUS = 450.0
SPAWNS = {m.Side.CT: (0.0, 1800.0), m.Side.T: (0.0, -2000.0)}
MAX_SPEED = 250.0
# players alternate between moving and holding an angle; per-step switch probabilities
HOLD_START_P = 0.2
HOLD_END_P = 0.2

ALIVE_COEF = 0.35
EQ_COEF = 0.12  # logit per 1000 units of team equipment difference

DEFAULT_INTENSITIES = {"weaponFires": 143.0, "damages": 20.0, "grenades": 14.0, "flashes": 13.0}

# conditional reason mix given the winner, from the published outcome shares
REASON_WEIGHTS = {
    m.Side.CT: {R.EliminationOfT: 37.0, R.BombDefused: 12.0, R.TargetSaved: 5.0},
    m.Side.T: {R.BombExploded: 19.0, R.EliminationOfCT: 27.0},
}
PLANT_BEFORE_CT_WIPE = 0.15
WINNER_DEATHS = (0.30, 0.35, 0.20, 0.10, 0.05)
LOSER_DEATHS = (0.05, 0.15, 0.25, 0.30, 0.25)
SURVIVOR_DEATHS = (0.15, 0.30, 0.30, 0.17, 0.08)
DEFUSED_T_DEATHS = (0.03, 0.07, 0.15, 0.20, 0.25, 0.30)

BUYS = {  # name: (probability, eq range, armor prob, helmet prob, kit prob, grenades range, weapons by side)
    "eco": (0.2, (200, 1200), 0.3, 0.0, 0.1, (0, 1), {m.Side.CT: (2, 3), m.Side.T: (1, 3)}),
    "force": (0.2, (1500, 3500), 0.7, 0.3, 0.3, (1, 3), {m.Side.CT: (4, 6), m.Side.T: (5, 7)}),
    "full": (0.6, (4000, 6500), 1.0, 0.9, 0.8, (2, 4), {m.Side.CT: (8, 10), m.Side.T: (9, 10)}),
}
GRENADE_MIX = ((m.GrenadeType.HE, 0.2), (m.GrenadeType.Smoke, 0.25), (m.GrenadeType.Molotov, 0.2),
               (m.GrenadeType.Flashbang, 0.3), (m.GrenadeType.Decoy, 0.05))


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    rounds: Optional[int] = None  # None plays until one side clinches or regulation ends
    tick_rate: int = 128
    update_hz: int = 2
    intensities: dict = field(default_factory=lambda: dict(DEFAULT_INTENSITIES))
    skill_gap: float = 0.0
    vars: m.ServerVars = m.ServerVars()
    map_name: str = "de_synth"
    reason_weights: Optional[dict] = None  # overrides the reason mix, keyed by RoundEndReason

    def validate(self):
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must fit in 64 bits")
        if not -1.0 <= self.skill_gap <= 1.0:
            raise InvalidConfig("skill_gap must lie in [-1, 1]")
        if self.tick_rate < 1 or self.update_hz < 1 or self.update_hz > self.tick_rate:
            raise InvalidConfig("need 1 <= update_hz <= tick_rate")
        if any(v < 0 for v in self.intensities.values()):
            raise InvalidConfig("intensities must be non-negative")
        unknown = set(self.intensities) - set(DEFAULT_INTENSITIES)
        if unknown:
            raise InvalidConfig(f"unknown intensity keys: {sorted(unknown)}")
        if self.rounds is not None and not 1 <= self.rounds <= self.vars.max_regulation_rounds:
            raise InvalidConfig(f"rounds must be in 1..{self.vars.max_regulation_rounds}")
        if self.reason_weights is not None and sum(self.reason_weights.values()) <= 0:
            raise InvalidConfig("reason_weights must have positive mass")


@dataclass(frozen=True)
class RoundTruth:
    round_num: int
    winner: m.Side
    reason: m.RoundEndReason
    ct_score: int
    t_score: int
    counts: dict  # action category -> count
    ct_eq: int
    t_eq: int
    win_logit: float


@dataclass(frozen=True)
class GroundTruth:
    rounds: tuple[RoundTruth, ...]
    player_stats: dict  # player id -> stat name -> count
    final_score: tuple[int, int]

    def to_json(self) -> dict:
        return {
            "finalScore": list(self.final_score),
            "rounds": [
                {"roundNum": r.round_num, "winner": r.winner.name, "reason": r.reason.name,
                 "ctScore": r.ct_score, "tScore": r.t_score, "counts": dict(r.counts),
                 "ctEqVal": r.ct_eq, "tEqVal": r.t_eq, "winLogit": r.win_logit}
                for r in self.rounds
            ],
            "playerStats": {str(pid): dict(s) for pid, s in sorted(self.player_stats.items())},
        }


def sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def win_logit(skill_gap: float, alive_diff: int, eq_diff: float) -> float:
    """CT win logit used by the generator; eq_diff in equipment units."""
    return 2.0 * skill_gap + ALIVE_COEF * alive_diff + EQ_COEF * eq_diff / 1000.0


def f32(x: float) -> float:
    return float(np.float32(x))


def default_players() -> tuple[m.PlayerInfo, ...]:
    return tuple(m.PlayerInfo(pid, f"player{pid}", m.Side.CT if pid <= 5 else m.Side.T) for pid in range(1, 11))


# --- planning ---------------------------------------------------------------

@dataclass
class _Loadout:
    eq_val: int
    money: int
    armor: int
    helmet: bool
    kit: bool
    grenades: int
    weapon: int


@dataclass
class RoundPlan:
    winner: m.Side
    reason: m.RoundEndReason
    loadouts: dict  # player id -> _Loadout
    team_eq: dict   # side -> int
    logit: float


def _draw_loadouts(rng: np.random.Generator, side: m.Side, ids) -> dict:
    names = list(BUYS)
    buy = BUYS[names[rng.choice(len(names), p=[BUYS[n][0] for n in names])]]
    _, (lo, hi), p_armor, p_helmet, p_kit, (g_lo, g_hi), weapons = buy
    out = {}
    for pid in ids:
        armor = 100 if rng.random() < p_armor else 0
        w_lo, w_hi = weapons[side]
        out[pid] = _Loadout(
            eq_val=int(rng.integers(lo // 50, hi // 50 + 1)) * 50,
            money=int(rng.integers(0, 321)) * 50,
            armor=armor,
            helmet=bool(armor and rng.random() < p_helmet),
            kit=bool(side is m.Side.CT and rng.random() < p_kit),
            grenades=int(rng.integers(g_lo, g_hi + 1)),
            weapon=int(rng.integers(w_lo, w_hi + 1)),
        )
    return out


def plan_round(rng: np.random.Generator, config: GenConfig, sides: dict) -> RoundPlan:
    loadouts = {}
    for side in m.Side:
        loadouts.update(_draw_loadouts(rng, side, [pid for pid, s in sorted(sides.items()) if s is side]))
    team_eq = {side: sum(loadouts[pid].eq_val for pid, s in sides.items() if s is side) for side in m.Side}
    logit = win_logit(config.skill_gap, 0, team_eq[m.Side.CT] - team_eq[m.Side.T])
    winner = m.Side.CT if rng.random() < sigmoid(logit) else m.Side.T
    if config.reason_weights:
        weights = {r: w for r, w in config.reason_weights.items() if m.winner_for(r) is winner and w > 0}
        if not weights:
            weights = {r: w for r, w in config.reason_weights.items() if w > 0}
            reason = _choice(rng, weights)
            winner = m.winner_for(reason)
        else:
            reason = _choice(rng, weights)
    else:
        reason = _choice(rng, REASON_WEIGHTS[winner])
    return RoundPlan(winner, reason, loadouts, team_eq, logit)


def _choice(rng, weights: dict):
    keys = list(weights)
    p = np.array([weights[k] for k in keys], dtype=float)
    return keys[rng.choice(len(keys), p=p / p.sum())]


def plan_match(config: GenConfig) -> list[RoundPlan]:
    """Plan every round of a match; cheap, no events are rendered."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    return _plan_match(rng, config, default_players())


def _sides_for(players, round_num: int, vars: m.ServerVars) -> dict:
    flip = round_num > vars.side_switch_after
    return {p.player_id: (p.start_side.other if flip else p.start_side) for p in players}


def _plan_match(rng, config: GenConfig, players) -> list[RoundPlan]:
    vars = config.vars
    if config.rounds is None:
        plans, ct, t = [], 0, 0
        while max(ct, t) < vars.clinch_score and len(plans) < vars.max_regulation_rounds:
            plan = plan_round(rng, config, _sides_for(players, len(plans) + 1, vars))
            plans.append(plan)
            ct, t = (ct + 1, t) if plan.winner is m.Side.CT else (ct, t + 1)
        return plans
    # fixed length: redraw until no side clinches before the final round
    for _ in range(10_000):
        plans = [plan_round(rng, config, _sides_for(players, i, vars)) for i in range(1, config.rounds + 1)]
        ct = t = 0
        ok = True
        for plan in plans[:-1]:
            ct, t = (ct + 1, t) if plan.winner is m.Side.CT else (ct, t + 1)
            if max(ct, t) >= vars.clinch_score:
                ok = False
                break
        if ok:
            return plans
    raise InvalidConfig(f"could not plan {config.rounds} rounds without an early clinch")


# --- rendering --------------------------------------------------------------

class _Deaths:
    """Kill schedule of one round: (tick, victim side) pairs in time order."""

    def __init__(self, ticks, sides):
        self.ticks = ticks
        self.sides = sides


def _death_counts(rng, plan: RoundPlan, planted: bool) -> tuple[int, int]:
    def draw(weights):
        return int(rng.choice(len(weights), p=weights))

    r = plan.reason
    if r is R.EliminationOfT:
        return draw(SURVIVOR_DEATHS), 5
    if r is R.EliminationOfCT:
        return 5, draw(SURVIVOR_DEATHS)
    if r is R.BombDefused:
        return draw(WINNER_DEATHS), draw(DEFUSED_T_DEATHS)
    if r is R.BombExploded:
        return draw(LOSER_DEATHS), draw(WINNER_DEATHS)
    return draw(WINNER_DEATHS), draw(LOSER_DEATHS)  # TargetSaved


def _schedule(rng, plan: RoundPlan, freeze_end: int, tr: int, vars: m.ServerVars):
    """Choose the bomb timeline, end tick and kill schedule for a round."""
    r = plan.reason
    planted = r in (R.BombDefused, R.BombExploded) or (r is R.EliminationOfCT and rng.random() < PLANT_BEFORE_CT_WIPE)
    plant = defuse = None
    if planted:
        plant = freeze_end + int(rng.uniform(25.0, 95.0) * tr)
    if r is R.TargetSaved:
        end = freeze_end + vars.round_time_secs * tr
    elif r is R.BombExploded:
        end = plant + vars.bomb_timer_secs * tr
    elif r is R.BombDefused:
        defuse = end = plant + int(rng.uniform(6.0, vars.bomb_timer_secs - 2.0) * tr)
    elif planted:
        end = plant + int(rng.uniform(3.0, vars.bomb_timer_secs - 2.0) * tr)
    else:
        end = freeze_end + int(rng.uniform(20.0, min(105.0, vars.round_time_secs - 2.0)) * tr)

    ct_d, t_d = _death_counts(rng, plan, planted)
    lo = freeze_end + 3 * tr
    loser = {R.EliminationOfT: m.Side.T, R.EliminationOfCT: m.Side.CT}.get(r)
    for _ in range(1000):
        sides = [m.Side.CT] * ct_d + [m.Side.T] * t_d
        rng.shuffle(sides)
        n = len(sides)
        ticks = sorted(int(x) for x in rng.uniform(lo, end, size=n))
        if loser is not None:
            # the eliminated side loses its last player exactly at the end tick
            idx = max(i for i, s in enumerate(sides) if s is loser)
            sides.append(sides.pop(idx))
            ticks[-1] = end
        if _schedule_ok(sides, ticks, plant, r):
            return planted, plant, defuse, end, _Deaths(ticks, sides)
    raise RuntimeError("could not build a consistent kill schedule")


def _schedule_ok(sides, ticks, plant, reason) -> bool:
    dead = {m.Side.CT: 0, m.Side.T: 0}
    for s, tick in zip(sides, ticks):
        if dead[m.Side.CT] == 5 or dead[m.Side.T] == 5:
            return False  # nobody left to fire the shot, or round already over
        if plant is not None and s is m.Side.T and tick < plant and dead[m.Side.T] == 4:
            return False  # someone has to survive to plant
        dead[s] += 1
    if reason is R.BombDefused and dead[m.Side.T] == 5:
        return ticks[-1] > plant if sides[-1] is m.Side.T else True
    return True


@dataclass
class _Live:
    pid: int
    side: m.Side
    hp: int = 100
    blinded_until: int = -1
    grenades: int = 0
    has_bomb: bool = False
    death_tick: Optional[int] = None


def _clip_pos(x: float, y: float) -> tuple[float, float]:
    xmin, xmax, ymin, ymax = MAP_BOUNDS
    if x < xmin:
        x = 2 * xmin - x
    elif x > xmax:
        x = 2 * xmax - x
    if y < ymin:
        y = 2 * ymin - y
    elif y > ymax:
        y = 2 * ymax - y
    return min(max(x, xmin), xmax), min(max(y, ymin), ymax)


class _RoundRenderer:
    """Turns a RoundPlan into a tick-sorted list of events."""

    def __init__(self, rng, config: GenConfig, plan: RoundPlan, round_num: int, start: int,
                 sides: dict, pings: dict, scores: tuple[int, int], last: bool):
        self.rng = rng
        self.cfg = config
        self.plan = plan
        self.round_num = round_num
        self.start = start
        self.sides = sides
        self.pings = pings
        self.scores = scores
        self.last = last
        self.tr = config.tick_rate
        self.stride = max(1, int(config.tick_rate / config.update_hz + 0.5))
        self.out: list = []  # (tick, priority, seq, event)
        self.counts: Counter = Counter()
        self.stats: dict = {pid: Counter() for pid in sides}
        self.motion: dict = {}  # pid -> steps where position, velocity, yaw or zone changed

    def emit(self, tick: int, prio: int, ev) -> None:
        self.out.append((tick, prio, len(self.out), ev))

    def render(self):
        rng, cfg, plan, tr, vars = self.rng, self.cfg, self.plan, self.tr, self.cfg.vars
        freeze_end = self.start + vars.freeze_time_secs * tr
        planted, plant, defuse, end, deaths = _schedule(rng, plan, freeze_end, tr, vars)
        official_end = end + vars.round_end_secs * tr
        self.end, self.official_end = end, official_end
        ids = sorted(self.sides)
        ct_ids = [p for p in ids if self.sides[p] is m.Side.CT]
        t_ids = [p for p in ids if self.sides[p] is m.Side.T]

        # who dies when: assign concrete victims in schedule order
        death_tick: dict[int, int] = {}
        alive_pool = {m.Side.CT: list(ct_ids), m.Side.T: list(t_ids)}
        kills = []
        for tick, side in zip(deaths.ticks, deaths.sides):
            victim = alive_pool[side].pop(int(rng.integers(len(alive_pool[side]))))
            death_tick[victim] = tick
            kills.append((tick, victim))

        def alive_at(pid, tick):
            d = death_tick.get(pid)
            return d is None or tick < d

        planter = None
        site = None
        if planted:
            candidates = [p for p in t_ids if alive_at(p, plant + 1)]
            planter = candidates[int(rng.integers(len(candidates)))]
            site = m.BombSite(int(rng.integers(2)))
        defuser = None
        if defuse is not None:
            candidates = [p for p in ct_ids if alive_at(p, defuse + 1)]
            defuser = candidates[int(rng.integers(len(candidates)))]

        # movement on the update grid
        grid = list(range(self.start, official_end + (1 if self.last else 0), self.stride))
        positions, velocities, yaws, zones = self._walk(grid, ids, death_tick, planter, site, plant)

        def pos_at(pid, tick):
            k = min(len(grid) - 1, max(0, (tick - self.start) // self.stride))
            return positions[pid][k]

        live = {pid: _Live(pid, self.sides[pid], grenades=plan.loadouts[pid].grenades) for pid in ids}
        carrier = planter if planter is not None else t_ids[int(rng.integers(len(t_ids)))]
        live[carrier].has_bomb = True

        # discrete actions as (tick, kind, payload) resolved in time order
        actions = [(t, 0, ("kill", v)) for t, v in kills]
        lo, hi = freeze_end + tr, end
        for kind in ("weaponFires", "damages", "grenades", "flashes"):
            n = int(rng.poisson(cfg.intensities.get(kind, 0.0)))
            for t in sorted(int(x) for x in rng.uniform(lo, hi, size=n)):
                actions.append((t, 1, (kind, None)))
        if planted:
            actions.append((plant, 2, ("plant", planter)))
        if defuse is not None:
            actions.append((defuse, 3, ("defuse", defuser)))
        actions.sort(key=lambda a: (a[0], a[1]))

        hp_changes: dict[int, list] = {pid: [] for pid in ids}
        self.emit(self.start, 0, m.RoundStart(self.start, self.round_num))
        self.emit(self.start, 1, m.PhaseChange(self.start, m.Phase.Freeze))
        self.emit(freeze_end, 1, m.PhaseChange(freeze_end, m.Phase.Default))
        bomb_changes = [(self.start, carrier)]
        grenade_changes: dict[int, list] = {pid: [] for pid in ids}
        blind_changes: dict[int, list] = {pid: [] for pid in ids}

        alive_now = list(ids)
        picks = iter(rng.random(len(actions)).tolist())
        for tick, _, (kind, arg) in actions:
            if kind == "kill":
                self._kill(tick, arg, live, pos_at, hp_changes, bomb_changes, planted and tick < plant or not planted)
                alive_now = [p for p in ids if live[p].death_tick is None]
            elif kind == "plant":
                self.emit(tick, 2, m.BombPlant(tick, arg, site, pos_at(arg, tick)))
                self.emit(tick, 5, m.PhaseChange(tick, m.Phase.BombPlanted))
                live[arg].has_bomb = False
                bomb_changes.append((tick, None))
                self.counts["bombEvents"] += 1
                self.stats[arg]["bombPlants"] += 1
            elif kind == "defuse":
                self.emit(tick, 2, m.BombDefuse(tick, arg))
                self.counts["bombEvents"] += 1
                self.stats[arg]["bombDefuses"] += 1
            elif kind == "weaponFires":
                pid = alive_now[int(next(picks) * len(alive_now))]
                self.emit(tick, 2, m.WeaponFire(tick, pid, pos_at(pid, tick), plan.loadouts[pid].weapon))
                self.counts["weaponFires"] += 1
                self.stats[pid]["weaponFires"] += 1
            elif kind == "damages":
                self._chip(tick, alive_now, live, pos_at, hp_changes)
            elif kind == "grenades":
                throwers = [p for p in alive_now if live[p].grenades > 0]
                if not throwers:
                    continue
                pid = throwers[int(rng.integers(len(throwers)))]
                gtype = GRENADE_MIX[int(rng.choice(len(GRENADE_MIX), p=[w for _, w in GRENADE_MIX]))][0]
                x, y, z = pos_at(pid, tick)
                ang = rng.uniform(0, 2 * math.pi)
                dist = rng.uniform(100.0, 1200.0)
                lx, ly = _clip_pos(x + dist * math.cos(ang), y + dist * math.sin(ang))
                self.emit(tick, 2, m.GrenadeThrow(tick, pid, gtype, (x, y, z), (f32(lx), f32(ly), z)))
                live[pid].grenades -= 1
                grenade_changes[pid].append((tick, live[pid].grenades))
                self.counts["grenades"] += 1
                self.stats[pid]["grenadesThrown"] += 1
            elif kind == "flashes":
                if len(alive_now) < 2:
                    continue
                a, v = rng.choice(alive_now, size=2, replace=False)
                a, v = int(a), int(v)
                dur = f32(rng.uniform(0.2, 4.5))
                self.emit(tick, 2, m.Flash(tick, a, v, dur))
                blind_changes[v].append((tick, tick + int(dur * tr)))
                self.counts["flashes"] += 1
                self.stats[a]["flashesThrown"] += 1

        if planted and plan.reason is R.BombExploded:
            self.emit(end, 3, m.BombExplode(end))
            self.counts["bombEvents"] += 1
        ct_score, t_score = self.scores
        self.emit(end, 4, m.RoundEnd(end, plan.winner, plan.reason, ct_score, t_score))
        self.emit(end, 5, m.PhaseChange(end, m.Phase.RoundEnd))
        self._updates(grid, ids, live, death_tick, positions, velocities, yaws, zones, hp_changes,
                      bomb_changes, grenade_changes, blind_changes)
        self.out.sort()  # (tick, priority, seq) is unique, so events are never compared
        return [ev for _, _, _, ev in self.out]

    def _kill(self, tick, victim, live, pos_at, hp_changes, bomb_changes, can_transfer):
        rng = self.rng
        side = self.sides[victim]
        shooters = [p for p, lv in live.items() if lv.side is not side and lv.death_tick is None]
        attacker = shooters[int(rng.integers(len(shooters)))]
        weapon = self.plan.loadouts[attacker].weapon
        apos, vpos = pos_at(attacker, tick), pos_at(victim, tick)
        lethal = live[victim].hp
        headshot = bool(rng.random() < 0.45)
        self.emit(tick, 2, m.Damage(tick, attacker, victim, apos, vpos, lethal, weapon))
        self.emit(tick, 2, m.Kill(tick, attacker, victim, apos, vpos, weapon, headshot))
        live[victim].hp = 0
        live[victim].death_tick = tick
        hp_changes[victim].append((tick, 0))
        for key, n in (("damages", 1), ("kills", 1)):
            self.counts[key] += n
        st_a, st_v = self.stats[attacker], self.stats[victim]
        st_a["kills"] += 1
        st_a["damage"] += lethal
        st_a["headshots"] += int(headshot)
        st_v["deaths"] += 1
        if live[victim].has_bomb:
            live[victim].has_bomb = False
            heirs = [p for p, lv in live.items() if lv.side is m.Side.T and lv.death_tick is None]
            new = heirs[int(rng.integers(len(heirs)))] if heirs and can_transfer else None
            if new is not None:
                live[new].has_bomb = True
            bomb_changes.append((tick, new))

    def _chip(self, tick, alive_now, live, pos_at, hp_changes):
        rng = self.rng
        victims = [p for p in alive_now if live[p].hp > 1]
        if not victims:
            return
        victim = victims[int(rng.integers(len(victims)))]
        shooters = [p for p in alive_now if live[p].side is not live[victim].side]
        if not shooters:
            return
        attacker = shooters[int(rng.integers(len(shooters)))]
        dmg = int(rng.integers(1, min(live[victim].hp - 1, 90) + 1))
        self.emit(tick, 2, m.Damage(tick, attacker, victim, pos_at(attacker, tick), pos_at(victim, tick), dmg,
                                    self.plan.loadouts[attacker].weapon))
        live[victim].hp -= dmg
        hp_changes[victim].append((tick, live[victim].hp))
        self.counts["damages"] += 1
        self.stats[attacker]["damage"] += dmg

    def _walk(self, grid, ids, death_tick, planter, site, plant):
        """Reflecting random walk with capped speed; the planter heads for the site.

        A free walk folded back into the map bounds is the same path as a walk
        that reflects off the walls, so non-planters are done in one shot.
        """
        rng = self.rng
        dt = self.stride / self.tr
        freeze_end = self.start + self.cfg.vars.freeze_time_secs * self.tr
        ticks = np.asarray(grid)
        n = len(grid)
        xmin, xmax, ymin, ymax = MAP_BOUNDS
        positions, velocities, yaws, zones = {}, {}, {}, {}
        for pid in ids:
            sx, sy = SPAWNS[self.sides[pid]]
            x0, y0 = _clip_pos(sx + rng.uniform(-300, 300), sy + rng.uniform(-200, 200))
            speeds = rng.uniform(0.0, MAX_SPEED, size=n)
            headings = rng.uniform(0.0, 2 * math.pi, size=n)
            d = death_tick.get(pid)
            moving = (ticks > freeze_end) & (ticks < (d if d is not None else np.iinfo(np.int64).max))
            if pid == planter:
                xs, ys = self._planter_path(grid, x0, y0, speeds, headings, moving, site, plant, dt)
            else:
                moving &= ~_holding(rng, n)
                step = np.where(moving, speeds * dt, 0.0)
                xs = _fold(x0 + np.cumsum(step * np.cos(headings)), xmin, xmax)
                ys = _fold(y0 + np.cumsum(step * np.sin(headings)), ymin, ymax)
            xs = xs.astype(np.float32)
            ys = ys.astype(np.float32)
            vx, vy = np.zeros(n), np.zeros(n)
            vx[1:] = (xs[1:].astype(np.float64) - xs[:-1]) / dt
            vy[1:] = (ys[1:].astype(np.float64) - ys[:-1]) / dt
            vx, vy = vx.astype(np.float32).tolist(), vy.astype(np.float32).tolist()
            yaw = (np.degrees(headings) % 360.0).astype(np.float32)
            yaw[yaw >= 360.0] = 0.0
            # standing players keep looking where they last looked
            yaw = yaw[np.maximum.accumulate(np.where(moving, np.arange(n), 0))]
            zone = np.zeros(n, dtype=bool)
            for cx, cy in BOMB_SITES.values():
                zone |= np.hypot(xs - cx, ys - cy) <= BOMB_ZONE_RADIUS
            motion = np.ones(n, dtype=bool)
            motion[1:] = ((xs[1:] != xs[:-1]) | (ys[1:] != ys[:-1]) | (yaw[1:] != yaw[:-1])
                          | (zone[1:] != zone[:-1]))
            motion[2:] |= motion[1:-1]  # velocity drops to zero one step after the last move
            self.motion[pid] = motion
            xl, yl = xs.tolist(), ys.tolist()
            positions[pid] = [(a, b, 0.0) for a, b in zip(xl, yl)]
            velocities[pid] = [(a, b, 0.0) for a, b in zip(vx, vy)]
            yaws[pid] = yaw.tolist()
            zones[pid] = zone.tolist()
        return positions, velocities, yaws, zones

    def _planter_path(self, grid, x, y, speeds, headings, moving, site, plant, dt):
        xs, ys = np.empty(len(grid)), np.empty(len(grid))
        tx, ty = BOMB_SITES[site]
        for k, tick in enumerate(grid):
            if moving[k]:
                speed, heading = float(speeds[k]), float(headings[k])
                if tick <= plant:
                    dist = math.hypot(tx - x, ty - y)
                    steps_left = max(1.0, (plant - tick) / self.stride)
                    heading = math.atan2(ty - y, tx - x)
                    speed = min(MAX_SPEED, dist / dt / steps_left * 1.5, dist / dt)
                x, y = _clip_pos(x + speed * math.cos(heading) * dt, y + speed * math.sin(heading) * dt)
            xs[k], ys[k] = x, y
        return xs, ys

    def _updates(self, grid, ids, live, death_tick, positions, velocities, yaws, zones, hp_changes,
                 bomb_changes, grenade_changes, blind_changes):
        plan = self.plan
        PS = m.PlayerState

        ticks = np.asarray(grid)

        def stepwise(changes, default):
            """Value of a step function at each grid tick, plus where it steps."""
            if not changes:
                return [default] * len(grid), np.zeros(len(grid), dtype=bool)
            values = [default] + [v for _, v in changes]
            idx = np.searchsorted(np.array([t for t, _ in changes]), ticks, side="right")
            steps = np.empty(len(grid), dtype=bool)
            steps[0] = idx[0] != 0
            steps[1:] = idx[1:] != idx[:-1]
            return [values[i] for i in idx.tolist()], steps

        carriers, carrier_steps = stepwise(bomb_changes, None)
        for pid in ids:
            lo = plan.loadouts[pid]
            side, ping = self.sides[pid], self.pings[pid]
            d = death_tick.get(pid)
            kd = len(grid) if d is None else int(np.searchsorted(ticks, d))
            blinded = np.zeros(kd, dtype=bool)
            for a, b in blind_changes[pid]:
                blinded |= (ticks[:kd] >= a) & (ticks[:kd] <= b)
            hps, hp_steps = stepwise(hp_changes[pid], 100)
            nades, nade_steps = stepwise(grenade_changes[pid], lo.grenades)
            # only emit an update when something about the player changed
            changed = (self.motion[pid] | hp_steps | nade_steps | carrier_steps)[:kd]
            changed[1:] |= blinded[1:] != blinded[:-1]
            changed[:1] = True
            pos, vel, yaw, zone, bl = positions[pid], velocities[pid], yaws[pid], zones[pid], blinded.tolist()
            armor, money, eq, weapon, helmet, kit = lo.armor, lo.money, lo.eq_val, lo.weapon, lo.helmet, lo.kit
            n0 = len(self.out)
            for j, k in enumerate(np.flatnonzero(changed).tolist()):
                tick = grid[k]
                self.out.append((tick, 6, n0 + j, m.PlayerUpdate(tick, PS(
                    pid, side, pos[k], vel[k], yaw[k], 0.0, hps[k], armor, money, eq, weapon, ping, bl[k],
                    zone[k], helmet, kit, carriers[k] == pid, nades[k]))))
            if d is not None:
                k = min(len(grid) - 1, (d - self.start) // self.stride)
                left = next((v for tt, v in reversed(grenade_changes[pid]) if tt <= d), lo.grenades)
                self.emit(d, 6, m.PlayerUpdate(d, PS(
                    pid, side, pos[k], m.ZERO3, yaw[k], 0.0, 0, 0, money, eq, weapon, ping,
                    False, False, helmet, kit, False, left)))
        # a new bomb carrier announces itself immediately
        for t, pid in bomb_changes[1:]:
            if pid is None:
                continue
            lo = plan.loadouts[pid]
            k = min(len(grid) - 1, (t - self.start) // self.stride)
            hp = next((v for tt, v in reversed(hp_changes[pid]) if tt <= t), 100)
            nades = next((v for tt, v in reversed(grenade_changes[pid]) if tt <= t), lo.grenades)
            self.emit(t, 6, m.PlayerUpdate(t, PS(
                pid, self.sides[pid], positions[pid][k], velocities[pid][k], yaws[pid][k], 0.0, hp, lo.armor,
                lo.money, lo.eq_val, lo.weapon, self.pings[pid], any(a <= t <= b for a, b in blind_changes[pid]),
                zones[pid][k], lo.helmet, lo.kit, True, nades)))


def _holding(rng, n: int) -> np.ndarray:
    """Two-state Markov chain over steps: True while the player holds position."""
    u = rng.random(n).tolist()
    out, hold = [False] * n, False
    for k in range(n):
        hold = u[k] >= HOLD_END_P if hold else u[k] < HOLD_START_P
        out[k] = hold
    return np.array(out, dtype=bool)


def _fold(v: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    r = np.mod(v - lo, 2 * span)
    return lo + np.where(r > span, 2 * span - r, r)


@gc_paused
def generate_match(config: GenConfig) -> tuple[EsdmHeader, list, GroundTruth]:
    """Generate a full match: ESDM header, event stream and ground truth."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    players = default_players()
    plans = _plan_match(rng, config, players)
    pings = {p.player_id: int(rng.integers(5, 80)) for p in players}
    vars = config.vars
    events: list = [m.MatchStart(0)]
    truths = []
    stats: dict = {p.player_id: Counter() for p in players}
    start = 0
    ct = t = 0
    for i, plan in enumerate(plans, start=1):
        if plan.winner is m.Side.CT:
            ct += 1
        else:
            t += 1
        renderer = _RoundRenderer(rng, config, plan, i, start, _sides_for(players, i, vars), pings, (ct, t),
                                  last=i == len(plans))
        events.extend(renderer.render())
        for pid, c in renderer.stats.items():
            stats[pid].update(c)
        counts = {k: renderer.counts.get(k, 0) for k in m.ACTION_TYPES}
        truths.append(RoundTruth(i, plan.winner, plan.reason, ct, t, counts,
                                 plan.team_eq[m.Side.CT], plan.team_eq[m.Side.T], plan.logit))
        start = renderer.official_end
    header = EsdmHeader(tick_rate=config.tick_rate, map_name=config.map_name, server_vars=vars, players=players)
    player_stats = {pid: {k: c.get(k, 0) for k in STAT_KEYS} for pid, c in stats.items()}
    return header, events, GroundTruth(tuple(truths), player_stats, (ct, t))


STAT_KEYS = ("kills", "deaths", "headshots", "damage", "flashesThrown", "grenadesThrown", "bombPlants",
             "bombDefuses", "weaponFires")


# --- anomalies --------------------------------------------------------------

ANOMALY_KINDS = ("restart", "duplicateRoundEnd", "truncation")


def _shift(ev, offset: int):
    if isinstance(ev, m.PlayerUpdate):
        return m.PlayerUpdate(ev.tick + offset, ev.state)
    cls = type(ev)  # frozen slotted dataclasses: rebuild directly, replace() is slow
    return cls(ev.tick + offset, *[getattr(ev, f) for f in cls.__slots__[1:]])


def _round_spans(events) -> list[tuple[int, int]]:
    starts = [i for i, e in enumerate(events) if isinstance(e, m.RoundStart)]
    return [(s, starts[j + 1] if j + 1 < len(starts) else len(events)) for j, s in enumerate(starts)]


@gc_paused
def inject_anomalies(events, kind: str, seed: int) -> list:
    """Return a copy of ``events`` with one anomaly inserted at a seeded spot.

    restart            warm-up rounds and a RestartMarker before the real stream
    duplicateRoundEnd  a second, contradictory RoundEnd after one round's end
    truncation         a trailing round that is cut off before it ends
    """
    if kind not in ANOMALY_KINDS:
        raise UnsupportedKind(f"unknown anomaly kind {kind!r}; expected one of {ANOMALY_KINDS}")
    rng = np.random.default_rng(seed)
    events = list(events)
    spans = _round_spans(events)
    if not spans:
        raise InvalidConfig("stream has no rounds")

    if kind == "restart":
        k = int(rng.integers(1, min(3, len(spans)) + 1))
        junk = [e for e in events[spans[0][0]:spans[k - 1][1]] if not isinstance(e, m.MatchStart)]
        offset = junk[-1].tick + 1
        return junk + [m.RestartMarker(junk[-1].tick)] + [_shift(e, offset) for e in events]

    if kind == "duplicateRoundEnd":
        s, e = spans[int(rng.integers(len(spans)))]
        idx, end = next((i, ev) for i, ev in enumerate(events[s:e], start=s) if isinstance(ev, m.RoundEnd))
        flipped = R.EliminationOfCT if end.winner is m.Side.CT else R.EliminationOfT
        dup = m.RoundEnd(end.tick + 1, end.winner.other, flipped, end.ct_score, end.t_score)
        pos = next((i for i in range(idx + 1, e) if events[i].tick > dup.tick), e)
        return events[:pos] + [dup] + events[pos:]

    # truncation: replay part of a round after the match and cut it mid-way
    s, e = spans[int(rng.integers(len(spans)))]
    src = events[s:e]
    end_idx = next(i for i, ev in enumerate(src) if isinstance(ev, m.RoundEnd))
    cut = int(rng.integers(1, end_idx))
    offset = events[-1].tick - src[0].tick
    partial = [_shift(ev, offset) for ev in src[:cut]]
    partial[0] = m.RoundStart(partial[0].tick, len(spans) + 1)
    return events + partial
