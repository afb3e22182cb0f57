"""Player statistics, corpus summaries and action heatmaps."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import asdict, dataclass, fields
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import model as m
from .errors import UnknownActionType


@dataclass(frozen=True)
class PlayerStatLine:
    player_id: int
    name: str
    kills: int = 0
    deaths: int = 0
    headshots: int = 0
    damage: int = 0
    flashes_thrown: int = 0
    grenades_thrown: int = 0
    bomb_plants: int = 0
    bomb_defuses: int = 0
    weapon_fires: int = 0
    rounds_played: int = 0
    adr: float = 0.0


_COUNTERS = ("kills", "deaths", "headshots", "damage", "flashes_thrown", "grenades_thrown", "bomb_plants",
             "bomb_defuses", "weapon_fires")


def player_stats(rounds: Iterable[m.GameRound], players: Sequence[m.PlayerInfo] = ()) -> list[PlayerStatLine]:
    """Aggregate the six action lists per player.

    ADR divides damage by rounds played, i.e. rounds the player appears in.
    Names come from ``players`` when given.
    """
    counts: dict[int, Counter] = {}
    played: Counter = Counter()

    def bump(pid, key, n=1):
        counts.setdefault(pid, Counter())[key] += n

    for r in rounds:
        seen = {pid for pid, _ in r.player_sides}
        for k in r.kills:
            bump(k.attacker_id, "kills")
            bump(k.victim_id, "deaths")
            if k.headshot:
                bump(k.attacker_id, "headshots")
            seen.update((k.attacker_id, k.victim_id))
        for d in r.damages:
            bump(d.attacker_id, "damage", d.hp_damage)
            seen.update((d.attacker_id, d.victim_id))
        for f in r.flashes:
            bump(f.attacker_id, "flashes_thrown")
            seen.add(f.attacker_id)
        for g in r.grenades:
            bump(g.player_id, "grenades_thrown")
            seen.add(g.player_id)
        for w in r.weapon_fires:
            bump(w.player_id, "weapon_fires")
            seen.add(w.player_id)
        for b in r.bomb_events:
            if isinstance(b, m.BombPlant):
                bump(b.player_id, "bomb_plants")
                seen.add(b.player_id)
            elif isinstance(b, m.BombDefuse):
                bump(b.player_id, "bomb_defuses")
                seen.add(b.player_id)
        played.update(seen)

    names = {p.player_id: p.name for p in players}
    lines = []
    for pid in sorted(set(counts) | set(played)):
        c = counts.get(pid, Counter())
        n = played[pid]
        lines.append(PlayerStatLine(pid, names.get(pid, f"player{pid}"), *(c[k] for k in _COUNTERS),
                                    rounds_played=n, adr=c["damage"] / n if n else 0.0))
    return lines


def stats_csv(lines: Sequence[PlayerStatLine]) -> str:
    """CSV text with a header row; one row per stat line."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f.name for f in fields(PlayerStatLine)])
    for line in lines:
        w.writerow(list(asdict(line).values()))
    return buf.getvalue()


# --- corpus summary ---------------------------------------------------------

@dataclass(frozen=True)
class CorpusSummary:
    documents: int
    rounds: int
    actions_per_round: float
    action_mix: dict  # category -> share of all actions
    frames_per_round: float
    bomb_plant_rate: float
    reason_mix: dict  # RoundEndReason name -> share of rounds
    ct_win_rate: float

    def to_dict(self) -> dict:
        return {
            "documents": self.documents,
            "rounds": self.rounds,
            "actionsPerRound": self.actions_per_round,
            "actionMix": dict(self.action_mix),
            "framesPerRound": self.frames_per_round,
            "bombPlantRate": self.bomb_plant_rate,
            "reasonMix": dict(self.reason_mix),
            "ctWinRate": self.ct_win_rate,
        }


def corpus_summary(docs: Sequence[m.DemoDocument]) -> CorpusSummary:
    if not docs:
        raise ValueError("corpus_summary needs at least one document")
    rounds = [r for d in docs for r in d.game_rounds]
    n = len(rounds)
    per_type = Counter()
    for r in rounds:
        for cat in m.ACTION_TYPES:
            per_type[cat] += len(r.events(cat))
    total = sum(per_type.values())
    reasons = Counter(r.reason.name for r in rounds)
    return CorpusSummary(
        documents=len(docs),
        rounds=n,
        actions_per_round=total / n if n else 0.0,
        action_mix={cat: per_type[cat] / total if total else 0.0 for cat in m.ACTION_TYPES},
        frames_per_round=sum(len(r.frames) for r in rounds) / n if n else 0.0,
        bomb_plant_rate=sum(r.bomb_plant_tick is not None for r in rounds) / n if n else 0.0,
        reason_mix={reason.name: reasons[reason.name] / n if n else 0.0 for reason in m.RoundEndReason},
        ct_win_rate=sum(r.winner is m.Side.CT for r in rounds) / n if n else 0.0,
    )


# --- heatmaps ---------------------------------------------------------------

DEFAULT_BOUNDS = (-2500.0, 2500.0, -2500.0, 2500.0)

# action type -> coordinate selector name -> getter
_SELECTORS: dict[str, dict[str, Callable]] = {
    "weaponFires": {"pos": lambda e: e.pos},
    "damages": {"attackerPos": lambda e: e.attacker_pos, "victimPos": lambda e: e.victim_pos},
    "kills": {"attackerPos": lambda e: e.attacker_pos, "victimPos": lambda e: e.victim_pos},
    "grenades": {"throwPos": lambda e: e.throw_pos, "landPos": lambda e: e.land_pos},
    "bombEvents": {"pos": lambda e: getattr(e, "pos", None)},
    "flashes": {},
}


def coordinate_selectors(action_type: str) -> tuple[str, ...]:
    if action_type not in _SELECTORS:
        raise UnknownActionType(f"unknown action type {action_type!r}; expected one of {m.ACTION_TYPES}")
    return tuple(_SELECTORS[action_type])


@dataclass(frozen=True)
class HeatmapGrid:
    bounds: tuple[float, float, float, float]
    resolution: tuple[int, int]
    counts: np.ndarray  # shape (nx, ny); counts[i, j] is column i (x), row j (y)
    out_of_bounds: int = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def action_heatmap(docs: Iterable[m.DemoDocument], action_type: str, coordinate: Optional[str] = None,
                   nx: int = 50, ny: int = 50,
                   bounds: tuple[float, float, float, float] = DEFAULT_BOUNDS) -> HeatmapGrid:
    """Bin one coordinate of every action of a type into an nx by ny grid.

    Bins are half-open except the last in each axis, which includes the
    upper bound. Points outside the bounds are tallied in ``out_of_bounds``.
    """
    selectors = _SELECTORS.get(action_type)
    if selectors is None:
        raise UnknownActionType(f"unknown action type {action_type!r}; expected one of {m.ACTION_TYPES}")
    if coordinate is None:
        if not selectors:
            raise UnknownActionType(f"{action_type} events carry no coordinates")
        coordinate = next(iter(selectors))
    if coordinate not in selectors:
        raise UnknownActionType(f"{action_type} has no coordinate {coordinate!r}; choose from {tuple(selectors)}")
    if nx < 1 or ny < 1:
        raise ValueError("grid resolution must be at least 1x1")
    get = selectors[coordinate]
    xs, ys = [], []
    for doc in docs:
        for r in doc.game_rounds:
            for e in r.events(action_type):
                p = get(e)
                if p is not None:
                    xs.append(p[0])
                    ys.append(p[1])
    return bin_points(xs, ys, nx, ny, bounds)


def bin_points(xs, ys, nx: int, ny: int, bounds=DEFAULT_BOUNDS) -> HeatmapGrid:
    xmin, xmax, ymin, ymax = bounds
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    inside = (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)
    ix = np.minimum(((x[inside] - xmin) / (xmax - xmin) * nx).astype(int), nx - 1)
    iy = np.minimum(((y[inside] - ymin) / (ymax - ymin) * ny).astype(int), ny - 1)
    counts = np.zeros((nx, ny), dtype=np.int64)
    np.add.at(counts, (ix, iy), 1)
    return HeatmapGrid(tuple(bounds), (nx, ny), counts, int((~inside).sum()))


def log_intensity(grid: HeatmapGrid) -> np.ndarray:
    """Display intensity in [0, 1]: log(1 + count) over its maximum."""
    v = np.log1p(grid.counts.astype(float))
    top = v.max() if v.size else 0.0
    return v / top if top > 0 else v


from .svg import heatmap_svg, render_frame_svg  # noqa: E402  (rendering lives beside the stats it draws)
