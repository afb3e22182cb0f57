"""Log loss, expected calibration error and per-round win curves."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import model as m
from ..errors import EmptyTest
from ..svg import line_chart_svg, reliability_svg
from .features import GameStateSample, round_samples

LL_CLIP = 1e-12


@dataclass(frozen=True)
class CalibrationBin:
    lower: float
    upper: float
    size: int
    acc: float  # positive rate in the bin (0 when empty)
    conf: float  # mean prediction in the bin (0 when empty)


@dataclass(frozen=True)
class CalibrationReport:
    n: int
    log_loss: float
    ece: float
    bins: tuple[CalibrationBin, ...]

    @property
    def w(self) -> int:
        return len(self.bins)

    def to_dict(self) -> dict:
        return {
            "N": self.n,
            "logLoss": self.log_loss,
            "ece": self.ece,
            "W": self.w,
            "bins": [{"lower": b.lower, "upper": b.upper, "size": b.size, "acc": b.acc, "conf": b.conf}
                     for b in self.bins],
        }

    def bins_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lower", "upper", "size", "acc", "conf"])
        for b in self.bins:
            w.writerow([repr(b.lower), repr(b.upper), b.size, repr(b.acc), repr(b.conf)])
        return buf.getvalue()

    def svg(self, title: str = "") -> str:
        return reliability_svg(self.bins, title)


def log_loss(p, y) -> float:
    p = np.clip(np.asarray(p, dtype=float), LL_CLIP, 1 - LL_CLIP)
    y = np.asarray(y, dtype=float)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def calibration_bins(p, y, w: int = 10) -> tuple[CalibrationBin, ...]:
    """Equal-width bins on [0, 1]; bin k holds predictions in [k/W, (k+1)/W), the last bin also 1.0."""
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    idx = np.minimum(np.floor(p * w).astype(int), w - 1)
    out = []
    for k in range(w):
        sel = idx == k
        size = int(sel.sum())
        out.append(CalibrationBin(k / w, (k + 1) / w, size,
                                  float(y[sel].mean()) if size else 0.0,
                                  float(p[sel].mean()) if size else 0.0))
    return tuple(out)


def expected_calibration_error(p, y, w: int = 10) -> float:
    n = len(p)
    if n == 0:
        raise EmptyTest("no predictions to score")
    return float(sum(b.size / n * abs(b.acc - b.conf) for b in calibration_bins(p, y, w)))


def score(p, y, w: int = 10) -> CalibrationReport:
    if len(p) == 0:
        raise EmptyTest("no predictions to score")
    bins = calibration_bins(p, y, w)
    n = len(p)
    ece = float(sum(b.size / n * abs(b.acc - b.conf) for b in bins))
    return CalibrationReport(n, log_loss(p, y), ece, bins)


def evaluate(model, test: Sequence[GameStateSample], w: int = 10) -> CalibrationReport:
    """Log loss and ECE of a model on held-out samples."""
    if not test:
        raise EmptyTest("test set is empty")
    y = np.array([s.label for s in test], dtype=float)
    return score(model.predict_samples(test), y, w)


def win_curve(model, round_: m.GameRound) -> list[tuple[int, float]]:
    """P(CT wins) at every frame of a round, in tick order."""
    samples = round_samples(round_)
    if not samples:
        return []
    p = model.predict_samples(samples)
    return [(s.frame.tick, float(v)) for s, v in zip(samples, p)]


def curve_csv(curves: dict) -> str:
    """CSV with one row per (model, tick, probability)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "tick", "pCtWin"])
    for name in sorted(curves):
        for tick, p in curves[name]:
            w.writerow([name, tick, repr(p)])
    return buf.getvalue()


def curve_svg(curves: dict, title: str = "") -> str:
    return line_chart_svg(curves, title)
