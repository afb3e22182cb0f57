import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from builders import state
from demoforge import model as m
from demoforge.errors import InvalidTeam


def _team(hps, armors=None, side=m.Side.CT):
    armors = armors or [100] * len(hps)
    return [state(pid, side, hp=hp, armor=a) for pid, (hp, a) in enumerate(zip(hps, armors), start=1)]


def test_full_health_team():
    t = m.recompute_team_aggregates(_team([100] * 5))
    assert t.alive_count == 5
    assert t.total_hp == 500


def test_wiped_team_has_zero_aggregates():
    t = m.recompute_team_aggregates(_team([0] * 5))
    assert t.alive_count == 0
    assert (t.total_hp, t.total_armor, t.total_eq_val, t.helmets, t.defuse_kits, t.grenades,
            t.players_in_bomb_zone) == (0, 0, 0, 0, 0, 0, 0)


def test_partial_team_sums_alive_only():
    t = m.recompute_team_aggregates(_team([37, 0, 100, 12, 0], [50, 100, 0, 25, 0]))
    assert t.alive_count == 3
    assert t.total_hp == 149
    assert t.total_armor == 75


def test_mixed_sides_rejected():
    players = _team([100] * 4) + [state(9, m.Side.T)]
    with pytest.raises(InvalidTeam):
        m.recompute_team_aggregates(players)


_player = st.builds(
    lambda hp, armor, eq, helmet, kit, nades, zone: (hp, armor, eq, helmet, kit, nades, zone),
    st.integers(0, 100), st.integers(0, 100), st.integers(0, 9000), st.booleans(), st.booleans(),
    st.integers(0, 4), st.booleans(),
)


@given(st.lists(_player, min_size=5, max_size=5), st.permutations(range(5)))
def test_aggregates_idempotent_and_order_free(rows, perm):
    players = [state(pid, m.Side.CT, hp=hp, armor=a, eq_val=eq, has_helmet=h, has_defuse_kit=k,
                     grenades_remaining=g, in_bomb_zone=z)
               for pid, (hp, a, eq, h, k, g, z) in enumerate(rows, start=1)]
    t = m.recompute_team_aggregates(players)
    assert m.recompute_team_aggregates([players[i] for i in perm]) == t
    assert m.recompute_team_aggregates(t.players) == t
    alive = [p for p in players if p.hp > 0]
    assert t.alive_count == len(alive)
    assert t.total_eq_val == sum(p.eq_val for p in alive)
    assert t.grenades == sum(p.grenades_remaining for p in alive)


def test_phase_graph_has_the_five_legal_edges():
    P = m.Phase
    assert m.LEGAL_TRANSITIONS == {(P.Freeze, P.Default), (P.Default, P.BombPlanted), (P.Default, P.RoundEnd),
                                   (P.BombPlanted, P.RoundEnd), (P.RoundEnd, P.Freeze)}
    illegal = set(itertools.permutations(P, 2)) - m.LEGAL_TRANSITIONS
    assert (P.Freeze, P.BombPlanted) in illegal and len(illegal) == 7


def test_every_reason_maps_to_one_winner():
    R = m.RoundEndReason
    assert {r: m.winner_for(r) for r in R} == {
        R.EliminationOfT: m.Side.CT, R.BombDefused: m.Side.CT, R.TargetSaved: m.Side.CT,
        R.EliminationOfCT: m.Side.T, R.BombExploded: m.Side.T,
    }


def test_enums_have_expected_cardinality():
    assert len(m.Side) == 2 and len(m.Phase) == 4 and len(m.RoundEndReason) == 5


def test_server_vars_defaults_and_checks():
    sv = m.ServerVars()
    assert (sv.freeze_time_secs, sv.round_time_secs, sv.bomb_timer_secs, sv.round_end_secs,
            sv.max_regulation_rounds, sv.side_switch_after) == (20, 115, 40, 5, 30, 15)
    assert sv.clinch_score == 16
    with pytest.raises(ValueError):
        m.ServerVars(side_switch_after=30)
    with pytest.raises(ValueError):
        m.ServerVars(bomb_timer_secs=0)


def test_player_update_is_immutable_value():
    u = m.PlayerUpdate(5, state(1, m.Side.CT))
    assert u == m.PlayerUpdate(5, state(1, m.Side.CT))
    assert hash(u) == hash(m.PlayerUpdate(5, state(1, m.Side.CT)))
    assert u.player_id == 1
    with pytest.raises(AttributeError):
        u.tick = 6


def test_meta_and_params_validation():
    with pytest.raises(ValueError):
        m.MatchMeta("", 128)
    with pytest.raises(ValueError):
        m.MatchMeta("de_x", 0)
    with pytest.raises(ValueError):
        m.ParserParams(parse_rate=0)
