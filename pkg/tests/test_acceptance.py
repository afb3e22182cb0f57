"""End-to-end acceptance checks, one test per criterion.

Each test records a verdict line that is printed in the terminal summary.
"""

import filecmp
import math
import os
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np

from builders import CT, PLAYERS, R, T, TR, VARS, check_gradients, round_events
from demoforge import model as m
from demoforge.codec import EsdmHeader, read_demo, write_demo
from demoforge.frames import extract_trajectories, sample_frames
from demoforge.matchgen import GenConfig, generate_match, inject_anomalies
from demoforge.parser import parse_demo
from demoforge.rounds import segment_rounds
from demoforge.winprob.features import build_dataset, round_samples, set_arrays
from demoforge.winprob.metrics import evaluate, log_loss, score
from demoforge.winprob.models import (
    TrainParams,
    deepsets_loss_grad,
    fit_deepsets,
    init_mlp,
    mlp_loss_grad,
    train_boosted_stumps,
    train_deepsets,
    train_logreg,
    train_mlp,
)


# --- 1: codec round-trip ----------------------------------------------------

def _f32(rng, lo, hi, n=None):
    if n is None:
        return float(np.float32(rng.uniform(lo, hi)))
    return tuple(float(x) for x in rng.uniform(lo, hi, size=n).astype(np.float32))


def _random_event(rng, tick):
    kind = int(rng.integers(14))
    pid = lambda: int(rng.integers(1, 11))  # noqa: E731
    vec = lambda: _f32(rng, -4000, 4000, 3)  # noqa: E731
    if kind == 0:
        return m.Damage(tick, pid(), pid(), vec(), vec(), int(rng.integers(1, 101)), int(rng.integers(14)))
    if kind == 1:
        return m.Kill(tick, pid(), pid(), vec(), vec(), int(rng.integers(14)), bool(rng.integers(2)))
    if kind == 2:
        return m.Flash(tick, pid(), pid(), _f32(rng, 0, 10))
    if kind == 3:
        return m.BombPlant(tick, pid(), m.BombSite(int(rng.integers(2))), vec())
    if kind == 4:
        return m.BombDefuse(tick, pid())
    if kind == 5:
        return m.BombExplode(tick)
    if kind == 6:
        return m.GrenadeThrow(tick, pid(), m.GrenadeType(int(rng.integers(len(m.GrenadeType)))), vec(), vec())
    if kind == 7:
        return m.WeaponFire(tick, pid(), vec(), int(rng.integers(14)))
    if kind == 8:
        side = m.Side(int(rng.integers(2)))
        hp = int(rng.integers(0, 101))
        s = m.PlayerState(pid(), side, vec(), vec() if hp else m.ZERO3, _f32(rng, 0, 359), _f32(rng, -90, 90), hp,
                          int(rng.integers(101)), int(rng.integers(16001)), int(rng.integers(10001)),
                          int(rng.integers(14)), int(rng.integers(1000)), bool(rng.integers(2)),
                          bool(rng.integers(2)), bool(rng.integers(2)), bool(rng.integers(2)),
                          bool(rng.integers(2)) and side is T, int(rng.integers(5)))
        return m.PlayerUpdate(tick, s)
    if kind == 9:
        return m.PhaseChange(tick, m.Phase(int(rng.integers(len(m.Phase)))))
    if kind == 10:
        return m.RoundStart(tick, int(rng.integers(1, 61)))
    if kind == 11:
        return m.RoundEnd(tick, m.Side(int(rng.integers(2))), m.RoundEndReason(int(rng.integers(5))),
                          int(rng.integers(31)), int(rng.integers(31)))
    if kind == 12:
        return m.MatchStart(tick)
    return m.RestartMarker(tick)


def _random_instance(rng):
    switch = int(rng.integers(1, 20))
    sv = m.ServerVars(int(rng.integers(1, 60)), int(rng.integers(1, 300)), int(rng.integers(1, 90)),
                      int(rng.integers(1, 15)), 2 * switch, switch)
    players = tuple(replace(p, name="".join(rng.choice(list("abcxyzé_ 9"), size=int(rng.integers(1, 12)))))
                    for p in PLAYERS)
    header = EsdmHeader(int(rng.integers(1, 257)), f"de_{int(rng.integers(10**6))}", sv, players)
    ticks = np.cumsum(rng.integers(0, 200, size=int(rng.integers(0, 80))))
    return header, [_random_event(rng, int(t)) for t in ticks]


def test_criterion_1_codec_roundtrip(acceptance):
    with acceptance(1, "codec round-trip on 1000 random instances in < 5 s") as v:
        rng = np.random.default_rng(1)
        instances = [_random_instance(rng) for _ in range(1000)]
        t0 = time.perf_counter()
        for header, events in instances:
            h2, reader = read_demo(write_demo(header, events))
            assert h2 == header and list(reader) == events
        elapsed = time.perf_counter() - t0
        v.detail = f"{sum(len(e) for _, e in instances)} events, {elapsed:.2f} s"
        assert elapsed < 5.0


# --- 2: parser oracle -------------------------------------------------------

def _outcomes(doc):
    return [(r.winner, r.reason, r.ct_score, r.t_score) for r in doc.game_rounds]


def test_criterion_2_parser_oracle(acceptance):
    with acceptance(2, "parser matches ground truth on seeds 1-50, clean and with anomalies, in < 30 s") as v:
        t0 = time.perf_counter()
        parse_time = 0.0
        mismatches = []
        for seed in range(1, 51):
            header, events, truth = generate_match(GenConfig(seed=seed))
            assert 16 <= len(truth.rounds) <= 30
            want = [(r.winner, r.reason, r.ct_score, r.t_score) for r in truth.rounds]
            dirty = events
            for kind in ("duplicateRoundEnd", "truncation", "restart"):
                dirty = inject_anomalies(dirty, kind, seed)
            for stream in (events, dirty):
                data = write_demo(header, stream)
                p0 = time.perf_counter()
                doc = parse_demo(data, with_frames=False)
                parse_time += time.perf_counter() - p0
                if _outcomes(doc) != want or len(doc.game_rounds) != len(truth.rounds):
                    mismatches.append(seed)
        elapsed = time.perf_counter() - t0
        v.detail = (f"{len(mismatches)} mismatching streams, {elapsed:.1f} s end to end "
                    f"of which {parse_time:.1f} s parsing")
        assert not mismatches
        assert elapsed < 30.0


# --- 3: frame arithmetic ----------------------------------------------------

def test_criterion_3_frame_arithmetic(acceptance):
    with acceptance(3, "94 s round gives 188 +/- 1 frames; 10 trajectories per round") as v:
        ev, _ = round_events(1, 0, T, R.EliminationOfCT, (0, 1), live_secs=74)
        rnd = segment_rounds(ev, VARS, TR, players=PLAYERS)[0][0]
        assert (rnd.end_tick - rnd.start_tick) / TR == 94
        n_frames = len(sample_frames(rnd, VARS, m.ParserParams(parse_rate=2), TR))
        counts = []
        for seed in (48, 3, 12):
            doc = parse_demo(write_demo(*generate_match(GenConfig(seed=seed))[:2]))
            counts.append((sum(len(extract_trajectories(r)) for r in doc.game_rounds), len(doc.game_rounds)))
        v.detail = f"{n_frames} frames; trajectories/rounds {counts}"
        assert abs(n_frames - 188) <= 1
        assert all(tracks == 10 * rounds for tracks, rounds in counts)


# --- 4: ECE formula ---------------------------------------------------------

def test_criterion_4_ece_formula(acceptance):
    with acceptance(4, "hand ECE case 0.10, perfect ECE 0, constant 0.5 LL ln 2") as v:
        hand = score([0.15] * 4 + [0.85] * 4, [1, 0, 0, 0, 1, 1, 1, 0]).ece
        perfect = score([0.0, 1.0, 0.0, 1.0], [0, 1, 0, 1]).ece
        half = score([0.5] * 100, [0, 1] * 50)
        v.detail = f"hand {hand!r}, perfect {perfect!r}, LL {half.log_loss!r}"
        assert abs(hand - 0.10) <= 1e-12
        assert perfect == 0.0
        assert abs(half.log_loss - math.log(2)) <= 1e-9 and half.ece == 0.0


# --- 5: gradients -----------------------------------------------------------

def test_criterion_5_gradients(acceptance):
    with acceptance(5, "MLP and DeepSets gradients within 1e-4 of finite differences on 20 draws") as v:
        worst_mlp = worst_ds = 0.0
        for draw in range(20):
            rng = np.random.default_rng(draw)
            n_in, hidden = int(rng.integers(2, 8)), int(rng.integers(2, 10))
            X, y = rng.uniform(size=(12, n_in)), rng.integers(0, 2, 12).astype(float)
            worst_mlp = max(worst_mlp, check_gradients(mlp_loss_grad, init_mlp(rng, n_in, hidden), X, y, 1e-5))
            Xs, ys = rng.uniform(size=(6, 10, n_in)), rng.integers(0, 2, 6).astype(float)
            worst_ds = max(worst_ds, check_gradients(deepsets_loss_grad, init_mlp(rng, n_in, hidden), Xs, ys, 1e-5))
        v.detail = f"max relative error MLP {worst_mlp:.2e}, DeepSets {worst_ds:.2e}"
        assert worst_mlp < 1e-4 and worst_ds < 1e-4


# --- 6: permutation invariance ----------------------------------------------

def test_criterion_6_permutation_invariance(small_doc, acceptance):
    with acceptance(6, "DeepSets bit-identical under 100 row permutations of 100 samples") as v:
        samples = [s for r in small_doc.game_rounds for s in round_samples(r)]
        X, y = set_arrays(samples)
        model = fit_deepsets(X, y, hp=TrainParams(epochs=2))
        rng = np.random.default_rng(6)
        pick = X[rng.choice(len(X), size=100, replace=False)]
        base = model.predict(pick)
        differing = 0
        for _ in range(100):
            perms = np.array([rng.permutation(10) for _ in range(len(pick))])
            shuffled = np.take_along_axis(pick, perms[:, :, None], axis=1)
            differing += int(np.sum(model.predict(shuffled) != base))
        v.detail = f"{differing} of 10000 predictions differ"
        assert differing == 0


# --- 7: benchmark signal ----------------------------------------------------

def test_criterion_7_benchmark_signal(benchmark_splits, acceptance):
    with acceptance(7, "5000-round corpus: LL < 0.693 for all, ECE < 0.05 for stumps and MLP, training < 5 min") as v:
        train, val, test = benchmark_splits
        trainers = {"logreg": train_logreg, "mlp": train_mlp, "stumps": train_boosted_stumps,
                    "deepsets": train_deepsets}
        reports, spent, improved = {}, 0.0, {}
        for name, fit in trainers.items():
            t0 = time.perf_counter()
            model = fit(train, val)
            spent += time.perf_counter() - t0
            reports[name] = evaluate(model, test)
            initial = model.training_log[0]["trainLoss"]
            improved[name] = log_loss(model.predict_samples(train), [s.label for s in train]) < initial
        v.detail = ", ".join(f"{k} LL {r.log_loss:.3f} ECE {r.ece:.3f}" for k, r in reports.items())
        v.detail += f"; n={len(train)}/{len(val)}/{len(test)}; training {spent:.0f} s"
        assert all(r.log_loss < math.log(2) for r in reports.values())
        assert reports["stumps"].ece < 0.05 and reports["mlp"].ece < 0.05
        assert all(improved.values()), improved
        assert spent < 300


# --- 8: split protocol ------------------------------------------------------

def test_criterion_8_split_protocol(acceptance):
    with acceptance(8, "100 rounds split 70/10/20 with one frame per round") as v:
        docs = []
        for seed in range(4):
            header, events, _ = generate_match(GenConfig(seed=200 + seed, rounds=25))
            doc = parse_demo(write_demo(header, events))
            docs.append(replace(doc, meta=replace(doc.meta, source_file=f"m{seed}")))
        assert sum(len(d.game_rounds) for d in docs) == 100
        splits = build_dataset(docs, seed=8)
        sizes = tuple(len(part) for part in splits)
        refs = [s.round_ref for part in splits for s in part]
        frame_ticks = {(d.meta.source_file, r.round_num): {f.tick for f in r.frames} for d in docs for r in d.game_rounds}
        v.detail = f"sizes {sizes}, {len(set(refs))} distinct rounds"
        assert sizes == (70, 10, 20)
        assert len(set(refs)) == 100
        assert all(s.frame.tick in frame_ticks[s.round_ref] for part in splits for s in part)


# --- 9: determinism ---------------------------------------------------------

PIPELINE = [
    ["generate", "--seed", "3", "--rounds", "6", "--out", "gen"],
    ["parse", "gen/match.esdm", "--out", "match.json"],
    ["parse", "gen/match.esdm", "--parse-rate", "4", "--out", "match4.json.gz"],
    ["stats", "match.json", "--csv", "stats.csv"],
    ["heatmap", "match.json", "--action", "weaponFires", "--out", "fires.svg"],
    ["winprob", "build", "match.json", "match4.json.gz", "--seed", "1", "--out", "data.json"],
    *[["winprob", "train", "--data", "data.json", "--model", k, "--seed", "2", "--out", f"{k}.json"]
      for k in ("logreg", "mlp", "stumps", "deepsets")],
    ["winprob", "eval", "--data", "data.json", "--model-file", "mlp.json", "--out", "eval.json",
     "--csv", "bins.csv", "--svg", "reliability.svg"],
    ["winprob", "curve", "--model-file", "mlp.json", "--model-file", "stumps.json", "--doc", "match.json",
     "--round", "2", "--csv", "curve.csv", "--svg", "curve.svg"],
]


def _run_pipeline(workdir):
    os.makedirs(workdir)
    for argv in PIPELINE:
        res = subprocess.run([sys.executable, "-m", "demoforge", *argv], cwd=workdir, capture_output=True, text=True)
        assert res.returncode == 0, (argv, res.stderr)


def _all_files(root):
    return sorted(os.path.relpath(os.path.join(d, f), root) for d, _, files in os.walk(root) for f in files)


def test_criterion_9_determinism(tmp_path, acceptance):
    with acceptance(9, "two CLI pipeline runs produce byte-identical outputs") as v:
        a, b = tmp_path / "a", tmp_path / "b"
        _run_pipeline(a)
        _run_pipeline(b)
        files = _all_files(a)
        assert files == _all_files(b)
        _, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
        v.detail = f"{len(files)} files compared, {len(mismatch) + len(errors)} differ"
        assert any(f.endswith(".svg") for f in files) and "mlp.json" in files
        assert not mismatch and not errors
