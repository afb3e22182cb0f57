"""Command-line interface: parse, stats, heatmap, generate and winprob."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

from . import model as m
from .errors import DemoforgeError

log = logging.getLogger("demoforge")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2


class InputError(Exception):
    """Bad arguments or unusable input files; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def worker_count(n_jobs: int) -> int:
    cap = os.environ.get("DEMOFORGE_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise InputError(f"DEMOFORGE_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(limit, n_jobs))


# --- parse ------------------------------------------------------------------

def _default_json_path(demo: str, out_dir: Optional[str]) -> str:
    stem = os.path.splitext(os.path.basename(demo))[0]
    return os.path.join(out_dir or os.path.dirname(os.path.abspath(demo)), stem + ".json")


def _parse_one(job: tuple) -> str:
    from .jsonio import write_json
    from .parser import parse_demo

    demo, out, parse_rate, keep_invalid = job
    doc = parse_demo(demo, m.ParserParams(parse_rate=parse_rate), keep_invalid=keep_invalid)
    write_json(doc, out)
    return f"{demo}: {len(doc.game_rounds)} rounds -> {out}"


def cmd_parse(args) -> int:
    if args.out and len(args.demos) > 1:
        raise InputError("--out takes a single demo; use --out-dir for several")
    if args.parse_rate < 1:
        raise InputError("--parse-rate must be at least 1")
    jobs = [(d, args.out or _default_json_path(d, args.out_dir), args.parse_rate, args.keep_invalid)
            for d in args.demos]
    for d in args.demos:
        if not os.path.isfile(d):
            raise InputError(f"no such demo file: {d}")
    outs = [os.path.abspath(j[1]) for j in jobs]
    if len(set(outs)) < len(outs):
        raise InputError("several demos map to the same output file; rename them or parse separately")
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
    workers = worker_count(len(jobs))
    if workers == 1:
        results = [_parse_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_parse_one, jobs))
    for line in results:
        log.info(line)
    return EXIT_OK


# --- stats / heatmap --------------------------------------------------------

def _load_docs(paths: Sequence[str]) -> list[m.DemoDocument]:
    from .jsonio import load_json

    docs = []
    for p in paths:
        if not os.path.isfile(p):
            raise InputError(f"no such document: {p}")
        docs.append(load_json(p))
    return docs


def cmd_stats(args) -> int:
    from .analytics import player_stats, stats_csv
    from .jsonio import write_bytes_atomic

    docs = _load_docs(args.docs)
    rounds = [r for d in docs for r in d.game_rounds]
    players = {p.player_id: p for d in docs for p in d.players}
    text = stats_csv(player_stats(rounds, list(players.values())))
    if args.csv:
        write_bytes_atomic(args.csv, text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_heatmap(args) -> int:
    from .analytics import action_heatmap
    from .jsonio import write_bytes_atomic
    from .svg import heatmap_svg

    docs = _load_docs(args.docs)
    grid = action_heatmap(docs, args.action, args.coord, args.nx, args.ny)
    title = f"{args.action} {args.coord or ''}".strip()
    write_bytes_atomic(args.out, heatmap_svg(grid, title).encode("utf-8"))
    log.info("binned %d points, %d out of bounds", grid.total, grid.out_of_bounds)
    return EXIT_OK


# --- generate ---------------------------------------------------------------

def cmd_generate(args) -> int:
    from .codec import write_demo
    from .jsonio import write_bytes_atomic
    from .matchgen import GenConfig, generate_match, inject_anomalies

    cfg = GenConfig(seed=args.seed, rounds=args.rounds, skill_gap=args.skill_gap)
    header, events, truth = generate_match(cfg)
    if args.anomaly:
        events = inject_anomalies(events, args.anomaly, args.seed)
    os.makedirs(args.out, exist_ok=True)
    write_bytes_atomic(os.path.join(args.out, "match.esdm"), write_demo(header, events))
    sidecar = json.dumps(truth.to_json(), indent=1, sort_keys=False) + "\n"
    write_bytes_atomic(os.path.join(args.out, "match.truth.json"), sidecar.encode("utf-8"))
    log.info("wrote %d rounds to %s", len(truth.rounds), args.out)
    return EXIT_OK


# --- winprob ----------------------------------------------------------------

def _parse_split(text: str) -> tuple[float, float, float]:
    try:
        parts = [float(x) for x in text.split("/")]
    except ValueError:
        raise InputError(f"--split must look like 70/10/20, got {text!r}") from None
    if len(parts) != 3 or any(x < 0 for x in parts) or sum(parts) <= 0:
        raise InputError(f"--split must be three non-negative numbers, got {text!r}")
    total = sum(parts)
    return tuple(x / total for x in parts)


def cmd_winprob_build(args) -> int:
    from .jsonio import write_bytes_atomic
    from .winprob.dataset_io import dumps_splits
    from .winprob.features import build_dataset

    docs = _load_docs(args.docs)
    splits = build_dataset(docs, args.seed, _parse_split(args.split))
    write_bytes_atomic(args.out, dumps_splits(splits).encode("utf-8"))
    log.info("train %d, val %d, test %d", len(splits.train), len(splits.val), len(splits.test))
    return EXIT_OK


def _load_splits(path: str):
    from .winprob.dataset_io import loads_splits

    if not os.path.isfile(path):
        raise InputError(f"no such dataset: {path}")
    with open(path, encoding="utf-8") as fh:
        return loads_splits(fh.read())


def cmd_winprob_train(args) -> int:
    from .winprob.models import TRAINERS, TrainParams, save_model

    splits = _load_splits(args.data)
    hp = TrainParams(seed=args.seed, epochs=args.epochs)
    model = TRAINERS[args.model](splits.train, splits.val, hp)
    save_model(model, args.out)
    last = model.training_log[-1] if model.training_log else {}
    log.info("%s trained: %s", model.kind, last)
    return EXIT_OK


def _load_model(path: str):
    from .winprob.models import load_model

    if not path or not os.path.isfile(path):
        raise InputError(f"no trained model at {path!r}; run `demoforge winprob train` first")
    return load_model(path)


def cmd_winprob_eval(args) -> int:
    from .jsonio import write_bytes_atomic
    from .winprob.metrics import evaluate

    model = _load_model(args.model_file)
    splits = _load_splits(args.data)
    report = evaluate(model, splits.test, args.bins)
    text = json.dumps({"model": model.kind, **report.to_dict()}, indent=1) + "\n"
    if args.out:
        write_bytes_atomic(args.out, text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    if args.csv:
        write_bytes_atomic(args.csv, report.bins_csv().encode("utf-8"))
    if args.svg:
        write_bytes_atomic(args.svg, report.svg(f"{model.kind} reliability").encode("utf-8"))
    return EXIT_OK


def cmd_winprob_curve(args) -> int:
    from .jsonio import write_bytes_atomic
    from .winprob.metrics import curve_csv, curve_svg, win_curve

    models = [_load_model(p) for p in args.model_file]
    doc = _load_docs([args.doc])[0]
    rnd = next((r for r in doc.game_rounds if r.round_num == args.round), None)
    if rnd is None:
        raise InputError(f"round {args.round} not in {args.doc}")
    if not rnd.frames:
        raise InputError(f"round {args.round} has no frames; parse the demo with frames")
    curves = {}
    for path, model in zip(args.model_file, models):
        name = model.kind if model.kind not in curves else os.path.basename(path)
        curves[name] = win_curve(model, rnd)
    if args.csv:
        write_bytes_atomic(args.csv, curve_csv(curves).encode("utf-8"))
    else:
        sys.stdout.write(curve_csv(curves))
    if args.svg:
        write_bytes_atomic(args.svg, curve_svg(curves, f"round {args.round}").encode("utf-8"))
    return EXIT_OK


# --- wiring -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .matchgen import ANOMALY_KINDS
    from .winprob.models import KINDS

    p = _Parser(prog="demoforge", description="Parse, analyze and model ESDM match demos.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("parse", help="parse demos into JSON documents")
    s.add_argument("demos", nargs="+")
    s.add_argument("--parse-rate", type=int, default=2)
    s.add_argument("--out", help="output path for a single demo (.gz compresses)")
    s.add_argument("--out-dir", help="directory for outputs when parsing several demos")
    s.add_argument("--keep-invalid", action="store_true", help="keep invalid rounds, flagged")
    s.set_defaults(func=cmd_parse)

    s = sub.add_parser("stats", help="per-player statistics as CSV")
    s.add_argument("docs", nargs="+")
    s.add_argument("--csv", help="write CSV here instead of standard output")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("heatmap", help="action heatmap as SVG")
    s.add_argument("docs", nargs="+")
    s.add_argument("--action", required=True, choices=m.ACTION_TYPES)
    s.add_argument("--coord", help="coordinate selector, e.g. pos, victimPos, landPos")
    s.add_argument("--nx", type=int, default=50)
    s.add_argument("--ny", type=int, default=50)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_heatmap)

    s = sub.add_parser("generate", help="write a synthetic demo and its ground truth")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--rounds", type=int, help="fixed round count (default: play to clinch)")
    s.add_argument("--skill-gap", type=float, default=0.0)
    s.add_argument("--anomaly", choices=ANOMALY_KINDS)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_generate)

    w = sub.add_parser("winprob", help="win-probability benchmark")
    wsub = w.add_subparsers(dest="action", required=True, parser_class=_Parser)

    s = wsub.add_parser("build", help="sample one frame per round and split")
    s.add_argument("docs", nargs="+")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--split", default="70/10/20")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_winprob_build)

    s = wsub.add_parser("train", help="train one model")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True, choices=tuple(KINDS))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=100)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_winprob_train)

    s = wsub.add_parser("eval", help="log loss and calibration on the test split")
    s.add_argument("--data", required=True)
    s.add_argument("--model-file", required=True)
    s.add_argument("--bins", type=int, default=10)
    s.add_argument("--out")
    s.add_argument("--csv")
    s.add_argument("--svg")
    s.set_defaults(func=cmd_winprob_eval)

    s = wsub.add_parser("curve", help="per-frame win probability for one round")
    s.add_argument("--model-file", required=True, action="append")
    s.add_argument("--doc", required=True)
    s.add_argument("--round", type=int, required=True)
    s.add_argument("--csv")
    s.add_argument("--svg")
    s.set_defaults(func=cmd_winprob_curve)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, DemoforgeError, OSError, ValueError) as exc:
        print(f"demoforge: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001  (last-resort report for unexpected failures)
        log.exception("internal error")
        print(f"demoforge: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
