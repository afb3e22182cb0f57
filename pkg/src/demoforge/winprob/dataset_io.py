"""Dataset files: the sampled frames of each split, as deterministic JSON."""

from __future__ import annotations

import json

from ..errors import DemoforgeError
from ..jsonio import _frame, _load_frame
from .features import GameStateSample, Splits

FORMAT = "demoforge-winprob-dataset"
VERSION = 1


def _sample(s: GameStateSample) -> dict:
    return {"label": s.label, "source": s.round_ref[0], "roundNum": s.round_ref[1],
            "startEqVal": list(s.start_eq), "frame": _frame(s.frame)}


def _load_sample(d: dict) -> GameStateSample:
    return GameStateSample(int(d["label"]), (d["source"], int(d["roundNum"])), _load_frame(d["frame"]),
                           tuple(int(v) for v in d["startEqVal"]))


def dumps_splits(splits: Splits) -> str:
    body = {"format": FORMAT, "version": VERSION}
    for name, part in zip(("train", "val", "test"), splits):
        body[name] = [_sample(s) for s in part]
    return json.dumps(body, separators=(",", ":"), allow_nan=False)


def loads_splits(text: str) -> Splits:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DemoforgeError(f"dataset is not valid JSON: {exc}") from None
    if not isinstance(d, dict) or d.get("format") != FORMAT:
        raise DemoforgeError("not a demoforge win-probability dataset")
    if d.get("version") != VERSION:
        raise DemoforgeError(f"unsupported dataset version {d.get('version')!r}")
    return Splits(*(tuple(_load_sample(s) for s in d[name]) for name in ("train", "val", "test")))
