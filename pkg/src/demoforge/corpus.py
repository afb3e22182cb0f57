"""Synthetic corpora: generate, encode and parse matches in one pass."""

from __future__ import annotations

from dataclasses import replace
from typing import Iterator

from . import model as m
from .codec import write_demo
from .matchgen import GenConfig, generate_match
from .parser import parse_demo


def synthetic_documents(total_rounds: int, seed: int = 0, config: GenConfig | None = None,
                        params: m.ParserParams = m.ParserParams()) -> Iterator[m.DemoDocument]:
    """Yield parsed generator matches until at least ``total_rounds`` rounds have been produced.

    Match k uses seed ``seed * 100003 + k`` so corpora with different seeds
    do not share matches. Documents are produced lazily; keep only what you need.
    """
    base = config or GenConfig(seed=0)
    produced = k = 0
    while produced < total_rounds:
        cfg = replace(base, seed=seed * 100003 + k)
        header, events, _ = generate_match(cfg)
        doc = parse_demo(write_demo(header, events), params)
        doc = replace(doc, meta=replace(doc.meta, source_file=f"synthetic-{cfg.seed}.esdm"))
        produced += len(doc.game_rounds)
        k += 1
        yield doc
