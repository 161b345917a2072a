"""Grid world, block types and the Tetris-like drop semantics of ``ab_drop()``."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DropError, GridOverflow, OutOfBounds


class BlockType(str, enum.Enum):
    B11 = "b11"
    B13 = "b13"
    B31 = "b31"

    @property
    def width(self) -> int:
        return footprint(self)[0]

    @property
    def height(self) -> int:
        return footprint(self)[1]

    @property
    def area(self) -> int:
        w, h = footprint(self)
        return w * h

    @classmethod
    def parse(cls, name: str) -> "BlockType":
        return cls(name.strip().strip("'\"").lower())


_FOOTPRINTS = {BlockType.B11: (1, 1), BlockType.B13: (1, 3), BlockType.B31: (3, 1)}


def footprint(block_type: BlockType) -> tuple[int, int]:
    """(width, height) in cells."""
    return _FOOTPRINTS[BlockType(block_type)]


@dataclass(frozen=True)
class GridConfig:
    width: int = 20
    height: int = 16

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")


@dataclass(frozen=True)
class DropCommand:
    block_type: BlockType
    x_position: int

    def __str__(self) -> str:
        return f"ab_drop({self.block_type.value}, {self.x_position})"


@dataclass(frozen=True)
class PlacedBlock:
    id: int
    block_type: BlockType
    x: int
    y: int

    @property
    def width(self) -> int:
        return self.block_type.width

    @property
    def height(self) -> int:
        return self.block_type.height

    @property
    def area(self) -> int:
        return self.block_type.area

    @property
    def top(self) -> int:
        """Topmost occupied row."""
        return self.y + self.height - 1

    @property
    def right(self) -> int:
        """One past the rightmost occupied column."""
        return self.x + self.width

    def cells(self) -> list[tuple[int, int]]:
        return [(cx, cy) for cx in range(self.x, self.right) for cy in range(self.y, self.y + self.height)]


@dataclass(frozen=True)
class LevelLayout:
    config: GridConfig = field(default_factory=GridConfig)
    blocks: tuple[PlacedBlock, ...] = ()
    rejected: tuple[tuple[DropCommand, str], ...] = ()

    def __len__(self) -> int:
        return len(self.blocks)

    def block(self, block_id: int) -> PlacedBlock:
        for b in self.blocks:
            if b.id == block_id:
                return b
        raise KeyError(block_id)


def occupied_columns(block_type: BlockType, x_position: int) -> range:
    half = footprint(block_type)[0] // 2
    return range(x_position - half, x_position + half + 1)


def _column_heights(layout: LevelLayout) -> list[int]:
    heights = [0] * layout.config.width
    for b in layout.blocks:
        for c in range(b.x, b.right):
            heights[c] = max(heights[c], b.top + 1)
    return heights


def _rest(config: GridConfig, heights: Sequence[int], cmd: DropCommand) -> tuple[int, int]:
    cols = occupied_columns(cmd.block_type, cmd.x_position)
    if cols.start < 0 or cols.stop > config.width:
        raise OutOfBounds(
            f"{cmd} spans columns {cols.start}..{cols.stop - 1}, outside 0..{config.width - 1}"
        )
    y = max(heights[c] for c in cols)
    if y + cmd.block_type.height > config.height:
        raise GridOverflow(f"{cmd} would rest at y={y} and exceed grid height {config.height}")
    return cols.start, y


def drop_block(layout: LevelLayout, cmd: DropCommand) -> LevelLayout:
    """Drop one block from the top of the grid; return the new layout.

    Raises OutOfBounds or GridOverflow; ``layout`` itself is never modified.
    """
    x, y = _rest(layout.config, _column_heights(layout), cmd)
    placed = PlacedBlock(len(layout.blocks), cmd.block_type, x, y)
    return LevelLayout(layout.config, layout.blocks + (placed,), layout.rejected)


def build_level(
    config: GridConfig, cmds: Iterable[DropCommand], strict: bool = False
) -> LevelLayout:
    """Fold :func:`drop_block` over ``cmds`` in order.

    In lenient mode a failing command is recorded in ``rejected`` and skipped;
    in strict mode the first error propagates.
    """
    heights = [0] * config.width
    blocks: list[PlacedBlock] = []
    rejected: list[tuple[DropCommand, str]] = []
    for cmd in cmds:
        try:
            x, y = _rest(config, heights, cmd)
        except DropError as exc:
            if strict:
                raise
            rejected.append((cmd, exc.kind))
            continue
        b = PlacedBlock(len(blocks), cmd.block_type, x, y)
        blocks.append(b)
        for c in range(b.x, b.right):
            heights[c] = b.top + 1
    return LevelLayout(config, tuple(blocks), tuple(rejected))


def occupancy(layout: LevelLayout) -> np.ndarray:
    """Boolean grid indexed ``[x, y]``."""
    grid = np.zeros((layout.config.width, layout.config.height), dtype=bool)
    for b in layout.blocks:
        grid[b.x : b.right, b.y : b.top + 1] = True
    return grid


def layout_from_blocks(
    config: GridConfig, blocks: Iterable[tuple[BlockType, int, int]]
) -> LevelLayout:
    """Build a layout from explicit (type, x, y) origins, bypassing drop semantics.

    Used for reference glyphs and XML import. Overlaps and out-of-grid cells
    raise ValueError.
    """
    placed = tuple(PlacedBlock(i, BlockType(t), x, y) for i, (t, x, y) in enumerate(blocks))
    seen: set[tuple[int, int]] = set()
    for b in placed:
        for cell in b.cells():
            cx, cy = cell
            if not (0 <= cx < config.width and 0 <= cy < config.height):
                raise ValueError(f"block {b.id} cell {cell} outside {config.width}x{config.height} grid")
            if cell in seen:
                raise ValueError(f"block {b.id} overlaps another block at {cell}")
            seen.add(cell)
    return LevelLayout(config, placed)
