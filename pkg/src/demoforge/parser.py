"""End-to-end parse: ESDM bytes to a cleaned DemoDocument."""

from __future__ import annotations

import logging
import os
from dataclasses import replace
from typing import BinaryIO, Union

from . import model as m
from ._util import gc_paused
from .codec import read_demo
from .errors import EmptyMatch
from .frames import sample_frames
from .rounds import reconcile_match, replay_outcome, segment_rounds, validate_round

log = logging.getLogger(__name__)

Source = Union[str, os.PathLike, bytes, BinaryIO]


@gc_paused
def parse_demo(source: Source, params: m.ParserParams = m.ParserParams(), keep_invalid: bool = False,
               with_frames: bool = True) -> m.DemoDocument:
    """Parse and clean one demo.

    Invalid rounds are dropped unless ``keep_invalid`` is set, in which case
    they stay in the document with their reasons attached. ``with_frames``
    can be turned off when only round outcomes are wanted.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            doc = _parse_stream(fh, params, keep_invalid, with_frames)
        return replace(doc, meta=replace(doc.meta, source_file=os.path.basename(os.fspath(source))))
    if isinstance(source, (bytes, bytearray)):
        import io
        source = io.BytesIO(source)
    return _parse_stream(source, params, keep_invalid, with_frames)


def _parse_stream(stream: BinaryIO, params: m.ParserParams, keep_invalid: bool, with_frames: bool):
    header, reader = read_demo(stream)
    sv, tr = header.server_vars, header.tick_rate
    if params.parse_rate > tr:
        raise ValueError(f"parse rate {params.parse_rate} exceeds tick rate {tr}")
    rounds, counts = segment_rounds(reader, sv, tr, params, header.players)

    kept = []
    previous = None
    invalid = conflicts = 0
    for r in rounds:
        verdict = validate_round(r, sv, tr, previous)
        if verdict.valid:
            if replay_outcome(r, sv, tr) != (r.winner, r.reason):
                conflicts += 1
                log.info("round %d: recorded outcome differs from replayed state", r.round_num)
            previous = r
        else:
            invalid += 1
            log.info("round %d invalid: %s", r.round_num, ", ".join(verdict.reasons))
            if not keep_invalid:
                continue
            r = replace(r, invalid_reasons=verdict.reasons)
        if with_frames:
            r = replace(r, frames=sample_frames(r, sv, params, tr))
        kept.append(replace(r, raw_events=()))

    start_sides = {p.player_id: p.start_side for p in header.players}
    try:
        rec = reconcile_match(kept, sv, start_sides)
        final, repairs, after = rec.rounds, rec.score_repairs, rec.rounds_after_clinch
    except EmptyMatch:
        final, repairs, after = (), 0, 0
    cleaning = m.CleaningReport(
        skipped_records=reader.skipped,
        discarded_before_restart=counts["discarded_before_restart"],
        orphan_round_ends=counts["orphan_round_ends"],
        duplicate_round_ends=counts["duplicate_round_ends"],
        incomplete_rounds=counts["incomplete_rounds"],
        illegal_phase_transitions=counts["illegal_phase_transitions"],
        invalid_rounds=invalid,
        outcome_conflicts=conflicts,
        score_repairs=repairs,
        rounds_after_clinch=after,
    )
    return m.DemoDocument(
        meta=m.MatchMeta(header.map_name, tr, header.version),
        server_vars=sv,
        parser_params=params,
        game_rounds=tuple(final),
        players=header.players,
        cleaning=cleaning,
    )


class DemoParser:
    """Convenience wrapper: ``DemoParser("match.esdm", parse_rate=2).parse()``."""

    def __init__(self, demofile: Source, parse_rate: int = 2, drop_incomplete_rounds: bool = True,
                 keep_invalid: bool = False):
        self.demofile = demofile
        self.params = m.ParserParams(parse_rate, drop_incomplete_rounds)
        self.keep_invalid = keep_invalid

    def parse(self) -> m.DemoDocument:
        return parse_demo(self.demofile, self.params, self.keep_invalid)
