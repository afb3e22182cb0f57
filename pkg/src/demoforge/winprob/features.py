"""Game-state samples and their vector / set featurizations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .. import model as m
from ..errors import EmptyCorpus

_TEAM_FIELDS = ("startEqVal", "aliveCount", "currentEqVal", "totalHp", "totalArmor", "helmets",
                "grenadesRemaining", "playersInBombZone")

VECTOR_FEATURES: tuple[str, ...] = (
    "secondsSincePhaseChange", "activeFires", "activeSmokes", "bombSiteA", "bombSiteB", "bombSiteNone",
    "defuseKitsAlive",
    *(f"ct.{f}" for f in _TEAM_FIELDS),
    *(f"t.{f}" for f in _TEAM_FIELDS),
    "bombInTInventory",
)

PLAYER_FEATURES: tuple[str, ...] = VECTOR_FEATURES + (
    "posX", "posY", "posZ", "velX", "velY", "velZ", "viewYaw", "viewPitch", "hp", "armor", "eqVal",
    "grenadesRemaining", "alive", "blinded", "inBombZone", "isCT",
)


@dataclass(frozen=True)
class GameStateSample:
    label: int  # 1 when CT won the round
    round_ref: tuple[str, int]  # (source, round number)
    frame: m.Frame
    start_eq: tuple[int, int] = (0, 0)  # (CT, T) equipment value at freeze end

    def vector(self) -> np.ndarray:
        return featurize_vector(self.frame, self.start_eq)

    def rows(self) -> np.ndarray:
        return featurize_set(self.frame, self.start_eq)


def featurize_vector(frame: m.Frame, start_eq: Sequence[int] = (0, 0)) -> np.ndarray:
    """Global and per-team features of one frame, in VECTOR_FEATURES order.

    ``start_eq`` is the (CT, T) equipment value at the end of freeze time,
    which a frame alone does not record.
    """
    site = frame.bomb.planted_site
    out = [
        frame.seconds_since_phase_change,
        len(frame.fires),
        len(frame.smokes),
        float(site is m.BombSite.A),
        float(site is m.BombSite.B),
        float(site is None),
        frame.ct.defuse_kits,
    ]
    for team, eq0 in ((frame.ct, start_eq[0]), (frame.t, start_eq[1])):
        out += [eq0, team.alive_count, team.total_eq_val, team.total_hp, team.total_armor, team.helmets,
                team.grenades, team.players_in_bomb_zone]
    out.append(float(site is None and frame.bomb.carrier_id is not None))
    return np.array(out, dtype=float)


def featurize_set(frame: m.Frame, start_eq: Sequence[int] = (0, 0)) -> np.ndarray:
    """One row per player: the global vector followed by that player's own features."""
    g = featurize_vector(frame, start_eq)
    rows = []
    for p in frame.players:
        alive = p.hp > 0
        vel = p.vel if alive else m.ZERO3
        rows.append(np.concatenate([g, [
            p.pos[0], p.pos[1], p.pos[2], vel[0], vel[1], vel[2], p.view_yaw, p.view_pitch, p.hp, p.armor,
            p.eq_val, p.grenades_remaining, float(alive), float(p.blinded), float(p.in_bomb_zone),
            float(p.side is m.Side.CT),
        ]]))
    return np.array(rows, dtype=float)


@dataclass(frozen=True)
class Splits:
    train: tuple[GameStateSample, ...]
    val: tuple[GameStateSample, ...]
    test: tuple[GameStateSample, ...]

    def __iter__(self):
        return iter((self.train, self.val, self.test))


def split_sizes(n: int, fractions: Sequence[float] = (0.7, 0.1, 0.2)) -> tuple[int, int, int]:
    n_train = int(np.floor(fractions[0] * n + 1e-9))
    n_val = int(np.floor(fractions[1] * n + 1e-9))
    return n_train, n_val, n - n_train - n_val


def build_dataset(docs: Iterable[m.DemoDocument], seed: int = 0,
                  fractions: Sequence[float] = (0.7, 0.1, 0.2)) -> Splits:
    """Draw one frame uniformly from every round, then split the rounds at random.

    Rounds without frames are skipped. Split sizes are floor(0.7n),
    floor(0.1n) and the remainder. ``docs`` may be a generator: only the
    sampled frames are kept, so large corpora can be streamed.
    """
    rng = np.random.default_rng(seed)
    samples = []
    map_name = None
    for i, doc in enumerate(docs):
        if map_name is None:
            map_name = doc.map_name
        elif doc.map_name != map_name:
            raise ValueError(f"documents span several maps ({map_name}, {doc.map_name}); build one dataset per map")
        source = doc.meta.source_file or f"doc{i}"
        for r in doc.game_rounds:
            if not r.frames:
                continue
            f = r.frames[int(rng.integers(len(r.frames)))]
            samples.append(GameStateSample(int(r.winner is m.Side.CT), (source, r.round_num), f,
                                           (r.ct_start_eq_val, r.t_start_eq_val)))
    if not samples:
        raise EmptyCorpus("no rounds with frames to sample from")
    order = rng.permutation(len(samples))
    shuffled = [samples[k] for k in order]
    a, b, _ = split_sizes(len(samples), fractions)
    return Splits(tuple(shuffled[:a]), tuple(shuffled[a:a + b]), tuple(shuffled[a + b:]))


def vector_arrays(samples: Sequence[GameStateSample]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([s.vector() for s in samples], dtype=float).reshape(len(samples), len(VECTOR_FEATURES))
    y = np.array([s.label for s in samples], dtype=float)
    return X, y


def set_arrays(samples: Sequence[GameStateSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack set inputs as (samples, players, features); every frame has the same player count."""
    if not samples:
        return np.zeros((0, 10, len(PLAYER_FEATURES))), np.zeros(0)
    X = np.stack([s.rows() for s in samples])
    y = np.array([s.label for s in samples], dtype=float)
    return X, y


def round_samples(round_: m.GameRound, source: str = "") -> list[GameStateSample]:
    """Every frame of a round as a sample, in tick order (for win curves)."""
    label = int(round_.winner is m.Side.CT)
    eq = (round_.ct_start_eq_val, round_.t_start_eq_val)
    return [GameStateSample(label, (source, round_.round_num), f, eq) for f in round_.frames]
