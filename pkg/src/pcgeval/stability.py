"""Static-equilibrium stand-in for the physics stability check.

A block is *moving* if it ends up with no supporter that is itself staying
put, or if the centre of mass of the block plus everything it carries lies
outside the span of its contacts with staying supporters. Loads flow
downwards; a block sitting on several supporters spreads its effective
weight among them in proportion to contact width, and the load delivered to
a supporter acts at the carried block's centre of mass clamped into that
contact span.

The analysis is a fixpoint: every pass evaluates all still-standing blocks
against the state at the start of the pass, marks every violator at once,
and repeats until a pass marks nothing. All arithmetic is exact (Fractions),
so a centre of mass sitting exactly on a contact edge counts as supported.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator

from .level import LevelLayout, PlacedBlock

GROUND = -1


@dataclass(frozen=True)
class SupportGraph:
    # block id -> {supporter id or GROUND: (left, right) contact span, half-open}
    supporters: dict[int, dict[int, tuple[int, int]]]

    def supported_by(self, block_id: int) -> set[int]:
        return {a for a, sups in self.supporters.items() if block_id in sups}


@dataclass(frozen=True)
class StabilityReport:
    total_blocks: int
    moving: frozenset[int]

    @property
    def st(self) -> float:
        if self.total_blocks == 0:
            return 0.0
        return (self.total_blocks - len(self.moving)) / self.total_blocks

    def to_dict(self) -> dict:
        return {"total_blocks": self.total_blocks, "moving": sorted(self.moving), "st": self.st}


def build_support_graph(layout: LevelLayout) -> SupportGraph:
    by_top: dict[int, list[PlacedBlock]] = {}
    for b in layout.blocks:
        by_top.setdefault(b.top, []).append(b)
    supporters: dict[int, dict[int, tuple[int, int]]] = {}
    for b in layout.blocks:
        sups: dict[int, tuple[int, int]] = {}
        if b.y == 0:
            sups[GROUND] = (b.x, b.right)
        else:
            for s in by_top.get(b.y - 1, ()):
                left, right = max(b.x, s.x), min(b.right, s.right)
                if left < right:
                    sups[s.id] = (left, right)
        supporters[b.id] = sups
    return SupportGraph(supporters)


def _violators(
    graph: SupportGraph, moving: set[int], order: list[PlacedBlock]
) -> set[int]:
    weight: dict[int, Fraction] = {}
    moment: dict[int, Fraction] = {}
    for b in order:
        if b.id not in moving:
            weight[b.id] = Fraction(b.area)
            moment[b.id] = Fraction(b.area) * (b.x + Fraction(b.width, 2))

    found = set()
    # order is by decreasing y, so everything resting on b has already pushed its load down
    for b in order:
        if b.id in moving:
            continue
        live = {s: span for s, span in graph.supporters[b.id].items() if s not in moving}
        if not live:
            found.add(b.id)
            continue
        cx = moment[b.id] / weight[b.id]
        lo = min(span[0] for span in live.values())
        hi = max(span[1] for span in live.values())
        if cx < lo or cx > hi:
            found.add(b.id)
        contact = sum(r - l for l, r in live.values())
        for s, (l, r) in live.items():
            if s == GROUND:
                continue
            load = weight[b.id] * Fraction(r - l, contact)
            weight[s] += load
            moment[s] += load * min(max(cx, Fraction(l)), Fraction(r))
    return found


def marking_passes(layout: LevelLayout) -> Iterator[frozenset[int]]:
    """Yield the set of blocks newly marked moving by each pass."""
    graph = build_support_graph(layout)
    order = sorted(layout.blocks, key=lambda b: (-b.y, b.id))
    moving: set[int] = set()
    while True:
        new = _violators(graph, moving, order)
        if not new:
            return
        moving |= new
        yield frozenset(new)


def compute_moving_set(layout: LevelLayout) -> frozenset[int]:
    moving: set[int] = set()
    for new in marking_passes(layout):
        moving |= new
    return frozenset(moving)


def stability_score(layout: LevelLayout, moving: Iterable[int] | None = None) -> StabilityReport:
    """Score a layout; ``moving`` overrides the built-in analysis (external evaluator)."""
    if moving is None:
        moving = compute_moving_set(layout)
    moving = frozenset(moving)
    ids = {b.id for b in layout.blocks}
    unknown = moving - ids
    if unknown:
        raise ValueError(f"moving ids {sorted(unknown)} are not blocks of this layout")
    return StabilityReport(len(layout.blocks), moving)


def read_moving_file(path: str | Path) -> frozenset[int]:
    """Moving block ids, one per line, as written by an external physics evaluator."""
    ids = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            ids.add(int(line))
    return frozenset(ids)
