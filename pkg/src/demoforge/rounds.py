"""Round segmentation, validation and match reconciliation.

The engine walks a tick-sorted event stream, cuts it into rounds at
RoundStart/RoundEnd records, and then checks each round against the game
rules: phase durations, win conditions and score progression.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

from . import model as m
from .errors import EmptyMatch

log = logging.getLogger(__name__)

DURATION_TOLERANCE_SECS = 2.0


@dataclass
class RoundMachineState:
    """Live state of one round while replaying its events."""

    current_phase: m.Phase = m.Phase.Freeze
    round_num: int = 0
    phase_start_tick: int = 0
    freeze_end_tick: Optional[int] = None
    bomb_planted: bool = False
    plant_tick: Optional[int] = None
    defused: bool = False
    alive_ct: int = 5
    alive_t: int = 5
    pending_events: list = field(default_factory=list)
    scores: tuple[int, int] = (0, 0)


def check_win_condition(state: RoundMachineState, tick: int, vars: m.ServerVars,
                        tick_rate: int) -> Optional[tuple[m.Side, m.RoundEndReason]]:
    """Return the (winner, reason) pair that holds at ``tick``, if any.

    Simultaneous conditions resolve as defuse, explosion, eliminations, then
    time expiry.
    """
    if state.defused:
        return m.Side.CT, m.RoundEndReason.BombDefused
    if state.bomb_planted and tick >= state.plant_tick + vars.bomb_timer_secs * tick_rate:
        return m.Side.T, m.RoundEndReason.BombExploded
    if state.alive_ct == 0:
        return m.Side.T, m.RoundEndReason.EliminationOfCT
    if state.alive_t == 0 and not state.bomb_planted:
        return m.Side.CT, m.RoundEndReason.EliminationOfT
    if (not state.bomb_planted and state.freeze_end_tick is not None
            and tick >= state.freeze_end_tick + vars.round_time_secs * tick_rate):
        return m.Side.CT, m.RoundEndReason.TargetSaved
    return None


# --- segmentation -----------------------------------------------------------

class _RoundBuilder:
    def __init__(self, start: m.RoundStart):
        self.start = start
        self.end: Optional[m.RoundEnd] = None
        self.events: list = [start]
        self.next_start_tick: Optional[int] = None


def _side_switch(info: m.PlayerInfo, round_num: int, vars: m.ServerVars) -> m.Side:
    return info.start_side if round_num <= vars.side_switch_after else info.start_side.other


def _build_round(b: _RoundBuilder, vars: m.ServerVars, tick_rate: int,
                 players: Sequence[m.PlayerInfo]) -> m.GameRound:
    events = b.events
    freeze_end = next((e.tick for e in events if isinstance(e, m.PhaseChange) and e.phase is m.Phase.Default),
                      b.start.tick)
    plant = next((e.tick for e in events if isinstance(e, m.BombPlant)), None)
    end_tick = b.end.tick if b.end is not None else events[-1].tick
    if b.next_start_tick is not None:
        official_end = b.next_start_tick
    else:
        official_end = max(end_tick, events[-1].tick)

    sides: dict[int, m.Side] = {}
    at_freeze_end: dict[int, m.PlayerState] = {}
    lists: dict[str, list] = {name: [] for name in m.ACTION_TYPES}
    for e in events:
        if isinstance(e, m.PlayerUpdate):
            # later updates are only needed for frames, so leave them undecoded here
            pid = e.player_id
            if e.tick <= freeze_end or pid not in at_freeze_end:
                st = e.state
                sides.setdefault(pid, st.side)
                at_freeze_end[pid] = st
            continue
        cat = m.action_category(e)
        if cat is not None:
            lists[cat].append(e)
    for info in players:
        sides.setdefault(info.player_id, _side_switch(info, b.start.round_num, vars))
    start_eq = {m.Side.CT: 0, m.Side.T: 0}
    for s in at_freeze_end.values():
        if s.alive:
            start_eq[s.side] += s.eq_val

    if b.end is not None:
        winner, reason, ct_score, t_score = b.end.winner, b.end.reason, b.end.ct_score, b.end.t_score
        invalid = ()
    else:
        winner, reason, ct_score, t_score = m.Side.CT, m.RoundEndReason.TargetSaved, 0, 0
        invalid = ("MissingRoundEnd",)
    return m.GameRound(
        round_num=b.start.round_num,
        start_tick=b.start.tick,
        freeze_end_tick=freeze_end,
        bomb_plant_tick=plant,
        end_tick=end_tick,
        official_end_tick=official_end,
        winner=winner,
        reason=reason,
        ct_score=ct_score,
        t_score=t_score,
        ct_start_eq_val=start_eq[m.Side.CT],
        t_start_eq_val=start_eq[m.Side.T],
        player_sides=tuple(sorted(sides.items())),
        damages=tuple(lists["damages"]),
        kills=tuple(lists["kills"]),
        flashes=tuple(lists["flashes"]),
        bomb_events=tuple(lists["bombEvents"]),
        grenades=tuple(lists["grenades"]),
        weapon_fires=tuple(lists["weaponFires"]),
        invalid_reasons=invalid,
        raw_events=tuple(events),
    )


def segment_rounds(events: Iterable[m.GameEvent], vars: m.ServerVars, tick_rate: int = 128,
                   params: m.ParserParams = m.ParserParams(),
                   players: Sequence[m.PlayerInfo] = ()) -> tuple[list[m.GameRound], Counter]:
    """Cut an event stream into raw rounds.

    Everything before the last MatchStart or RestartMarker is discarded.
    Returns the rounds and a Counter of cleaning events (orphan and
    duplicate round ends, dropped incomplete rounds, illegal phase changes,
    discarded pre-restart rounds).
    """
    events = list(events)
    counts: Counter = Counter()
    reset = -1
    for i, e in enumerate(events):
        if isinstance(e, (m.MatchStart, m.RestartMarker)):
            reset = i
    if reset >= 0:
        counts["discarded_before_restart"] = sum(isinstance(e, m.RoundStart) for e in events[:reset])
    stream = events[reset + 1:]

    builders: list[_RoundBuilder] = []
    current: Optional[_RoundBuilder] = None   # open: started, not yet ended
    closed: Optional[_RoundBuilder] = None    # ended, collecting round-end phase events
    phase: Optional[m.Phase] = None
    update = m.PlayerUpdate
    for e in stream:
        if isinstance(e, update):
            target = current or closed
            if target is not None:
                target.events.append(e)
            continue
        if isinstance(e, m.PhaseChange):
            if phase is not None and (phase, e.phase) not in m.LEGAL_TRANSITIONS and phase is not e.phase:
                counts["illegal_phase_transitions"] += 1
            phase = e.phase
        if isinstance(e, m.RoundStart):
            if current is not None:
                counts["incomplete_rounds"] += 1
                log.warning("round %d restarted before it ended; dropped", current.start.round_num)
            if closed is not None:
                closed.next_start_tick = e.tick
            current, closed = _RoundBuilder(e), None
            phase = m.Phase.Freeze
            continue
        if isinstance(e, m.RoundEnd):
            if current is not None:
                current.end = e
                current.events.append(e)
                builders.append(current)
                current, closed = None, current
            elif closed is not None:
                counts["duplicate_round_ends"] += 1
            else:
                counts["orphan_round_ends"] += 1
            continue
        target = current or closed
        if target is not None:
            target.events.append(e)

    rounds = [_build_round(b, vars, tick_rate, players) for b in builders]
    if current is not None:
        counts["incomplete_rounds"] += 1
        if not params.drop_incomplete_rounds:
            rounds.append(_build_round(current, vars, tick_rate, players))
    return rounds, counts


# --- validation -------------------------------------------------------------

@dataclass(frozen=True)
class ValidityVerdict:
    reasons: tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.reasons

    def __bool__(self) -> bool:
        return self.valid


VALID = ValidityVerdict()


def _alive_after(round_: m.GameRound, up_to: int) -> tuple[int, int]:
    dead = {m.Side.CT: set(), m.Side.T: set()}
    for k in round_.kills:
        if k.tick > up_to:
            continue
        side = round_.side_of(k.victim_id)
        if side is not None:
            dead[side].add(k.victim_id)
    return 5 - len(dead[m.Side.CT]), 5 - len(dead[m.Side.T])


def replay_outcome(round_: m.GameRound, vars: m.ServerVars,
                   tick_rate: int) -> Optional[tuple[m.Side, m.RoundEndReason]]:
    """Recompute the round outcome from its kills and bomb events alone."""
    state = RoundMachineState(current_phase=m.Phase.Default, round_num=round_.round_num,
                              phase_start_tick=round_.freeze_end_tick,
                              freeze_end_tick=round_.freeze_end_tick)
    timed = sorted(
        [(k.tick, 1, k) for k in round_.kills if k.tick <= round_.end_tick]
        + [(b.tick, 0, b) for b in round_.bomb_events if b.tick <= round_.end_tick],
        key=lambda x: (x[0], x[1]),
    )
    checks = {round_.end_tick, round_.freeze_end_tick + vars.round_time_secs * tick_rate}
    checks.update(t for t, _, _ in timed)
    if round_.bomb_plant_tick is not None:
        checks.add(round_.bomb_plant_tick + vars.bomb_timer_secs * tick_rate)
    dead: dict[m.Side, set] = {m.Side.CT: set(), m.Side.T: set()}
    i = 0
    for tick in sorted(c for c in checks if c <= round_.end_tick):
        while i < len(timed) and timed[i][0] <= tick:
            ev = timed[i][2]
            if isinstance(ev, m.Kill):
                side = round_.side_of(ev.victim_id)
                if side is not None:
                    dead[side].add(ev.victim_id)
                    state.alive_ct = 5 - len(dead[m.Side.CT])
                    state.alive_t = 5 - len(dead[m.Side.T])
            elif isinstance(ev, m.BombPlant) and not state.bomb_planted:
                state.bomb_planted, state.plant_tick = True, ev.tick
                state.current_phase, state.phase_start_tick = m.Phase.BombPlanted, ev.tick
            elif isinstance(ev, m.BombDefuse) and state.bomb_planted:
                state.defused = True
            i += 1
        outcome = check_win_condition(state, tick, vars, tick_rate)
        if outcome is not None:
            return outcome
    return None


def validate_round(round_: m.GameRound, vars: m.ServerVars, tick_rate: int = 128,
                   previous: Optional[m.GameRound] = None) -> ValidityVerdict:
    """Check one segmented round against the game rules. Never raises."""
    reasons = list(round_.invalid_reasons)
    tol = DURATION_TOLERANCE_SECS * tick_rate
    freeze = round_.freeze_end_tick - round_.start_tick
    live_end = round_.bomb_plant_tick if round_.bomb_plant_tick is not None else round_.end_tick
    live = live_end - round_.freeze_end_tick
    post = round_.official_end_tick - round_.end_tick
    round_ticks = vars.round_time_secs * tick_rate
    bomb_ticks = vars.bomb_timer_secs * tick_rate
    bad = (
        abs(freeze - vars.freeze_time_secs * tick_rate) > tol
        or freeze <= 0
        or live < 0
        or live > round_ticks + tol
        or post < 0
        or post > vars.round_end_secs * tick_rate + tol
        or (round_.reason is m.RoundEndReason.TargetSaved and round_.bomb_plant_tick is None
            and live < round_ticks - tol)
    )
    if round_.bomb_plant_tick is not None:
        after_plant = round_.end_tick - round_.bomb_plant_tick
        bad = bad or after_plant < 0 or after_plant > bomb_ticks + tol
        if round_.reason is m.RoundEndReason.BombExploded:
            bad = bad or after_plant < bomb_ticks - tol
    if bad:
        reasons.append("DurationOutOfBounds")

    if round_.winner is not m.winner_for(round_.reason) or replay_outcome(round_, vars, tick_rate) is None:
        reasons.append("NoWinCondition")

    alive_ct, alive_t = _alive_after(round_, round_.end_tick)
    if (round_.reason is m.RoundEndReason.EliminationOfT and alive_t > 0) or (
            round_.reason is m.RoundEndReason.EliminationOfCT and alive_ct > 0):
        reasons.append("InconsistentEliminations")

    if round_.reason in (m.RoundEndReason.BombDefused, m.RoundEndReason.BombExploded) and not any(
            isinstance(b, m.BombPlant) for b in round_.bomb_events):
        reasons.append("BombReasonWithoutPlant")

    if previous is not None and (round_.ct_score < previous.ct_score or round_.t_score < previous.t_score):
        reasons.append("ScoreRegression")
    return ValidityVerdict(tuple(dict.fromkeys(reasons)))


# --- reconciliation ---------------------------------------------------------

@dataclass(frozen=True)
class Reconciliation:
    rounds: tuple[m.GameRound, ...]
    score_repairs: int = 0
    rounds_after_clinch: int = 0


def reconcile_match(rounds: Sequence[m.GameRound], vars: m.ServerVars,
                    start_sides: Optional[dict[int, m.Side]] = None) -> Reconciliation:
    """Renumber rounds, rebuild scores from winners and apply the side switch.

    Recorded scores that disagree with the winner sequence are overwritten
    and counted. Rounds played after one side reaches the clinch score are
    dropped.
    """
    if not rounds:
        raise EmptyMatch("no valid rounds to reconcile")
    if start_sides is None:
        start_sides = dict(rounds[0].player_sides)
    ct = t = 0
    repairs = 0
    out = []
    for i, r in enumerate(rounds, start=1):
        if r.winner is m.Side.CT:
            ct += 1
        else:
            t += 1
        if (r.ct_score, r.t_score) != (ct, t):
            repairs += 1
        flip = i > vars.side_switch_after
        sides = tuple(sorted((pid, s.other if flip else s) for pid, s in start_sides.items()))
        out.append(replace(r, round_num=i, ct_score=ct, t_score=t, player_sides=sides))
        if max(ct, t) >= vars.clinch_score:
            break
    return Reconciliation(tuple(out), repairs, len(rounds) - len(out))
