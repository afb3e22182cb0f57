"""Downsample per-tick player updates into frames; extract trajectories."""

from __future__ import annotations

from typing import Sequence

from . import model as m
from .errors import ParseError


def frame_stride(tick_rate: int, parse_rate: int) -> int:
    """Ticks between frames, rounding half up."""
    if parse_rate > tick_rate:
        raise ValueError(f"parse rate {parse_rate} exceeds tick rate {tick_rate}")
    return max(1, int(tick_rate / parse_rate + 0.5))


def frame_ticks(start_tick: int, end_tick: int, stride: int) -> range:
    return range(start_tick, end_tick + 1, stride)


def _phase_length(phase: m.Phase, vars: m.ServerVars) -> float:
    return {
        m.Phase.Freeze: vars.freeze_time_secs,
        m.Phase.Default: vars.round_time_secs,
        m.Phase.BombPlanted: vars.bomb_timer_secs,
        m.Phase.RoundEnd: vars.round_end_secs,
    }[phase]


def sample_frames(round_: m.GameRound, vars: m.ServerVars, params: m.ParserParams,
                  tick_rate: int, events: Sequence[m.GameEvent] | None = None) -> tuple[m.Frame, ...]:
    """Snapshot the round every ``round(tick_rate / parse_rate)`` ticks.

    Frames run from the round start through its end tick. Each player's
    state is their latest update at or before the frame tick; players with
    no update yet fall back to their first update of the round.
    """
    if events is None:
        events = round_.raw_events
    stride = frame_stride(tick_rate, params.parse_rate)
    fire_ticks = int(round(vars.fire_lifetime_secs * tick_rate))
    smoke_ticks = int(round(vars.smoke_lifetime_secs * tick_rate))

    players: dict[int, m.PlayerState] = {}
    for e in events:
        if isinstance(e, m.PlayerUpdate) and e.player_id not in players:
            players[e.player_id] = e.state
    if not players:
        raise ParseError(f"round {round_.round_num}: no player state available")

    phase, phase_start = m.Phase.Freeze, round_.start_tick
    fires: list[m.MapEffect] = []
    smokes: list[m.MapEffect] = []
    plant_site = plant_tick = None
    frames = []
    i, n = 0, len(events)
    for ft in frame_ticks(round_.start_tick, round_.end_tick, stride):
        while i < n and events[i].tick <= ft:
            e = events[i]
            i += 1
            if isinstance(e, m.PlayerUpdate):
                st = e.state
                players[st.player_id] = st
            elif isinstance(e, m.PhaseChange):
                phase, phase_start = e.phase, e.tick
            elif isinstance(e, m.RoundStart):
                phase, phase_start = m.Phase.Freeze, e.tick
            elif isinstance(e, m.GrenadeThrow):
                if e.grenade_type is m.GrenadeType.Molotov:
                    fires.append(m.MapEffect(e.land_pos, e.tick + fire_ticks))
                elif e.grenade_type is m.GrenadeType.Smoke:
                    smokes.append(m.MapEffect(e.land_pos, e.tick + smoke_ticks))
            elif isinstance(e, m.BombPlant):
                plant_site, plant_tick = e.site, e.tick
            elif isinstance(e, m.Kill):
                victim = players.get(e.victim_id)
                if victim is not None and victim.hp > 0:
                    players[e.victim_id] = victim._replace(hp=0, vel=m.ZERO3, has_bomb=False)
        if fires:
            fires = [f for f in fires if f.expiry_tick >= ft]
        if smokes:
            smokes = [s for s in smokes if s.expiry_tick >= ft]
        ct_states, t_states = [], []
        for p in players.values():
            (ct_states if p.side is m.Side.CT else t_states).append(p)
        ct = m.recompute_team_aggregates(ct_states)
        t = m.recompute_team_aggregates(t_states)
        carrier = None
        if plant_site is None:
            carrier = next((p.player_id for p in t.players if p.has_bomb and p.hp > 0), None)
        elapsed = (ft - phase_start) / tick_rate
        frames.append(m.Frame(
            tick=ft,
            clock_secs=max(0.0, _phase_length(phase, vars) - elapsed),
            phase=phase,
            seconds_since_phase_change=elapsed,
            bomb=m.BombState(carrier, plant_site, plant_tick),
            fires=tuple(fires),
            smokes=tuple(smokes),
            ct=ct,
            t=t,
        ))
    return tuple(frames)


def extract_trajectories(round_: m.GameRound) -> list[m.Trajectory]:
    """One trajectory per player: positions at every frame while alive."""
    ids = sorted({p.player_id for f in round_.frames for p in f.players} | {pid for pid, _ in round_.player_sides})
    tracks: dict[int, list] = {pid: [] for pid in ids}
    ended: set[int] = set()
    for f in round_.frames:
        for p in f.players:
            if p.player_id in ended:
                continue
            if p.hp > 0:
                tracks[p.player_id].append((f.tick, p.pos))
            elif tracks[p.player_id]:
                ended.add(p.player_id)
    return [m.Trajectory(pid, round_.round_num, tuple(tracks[pid])) for pid in ids]
