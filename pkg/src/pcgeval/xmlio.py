"""Science Birds level XML export and import.

Block names, the cell size in world units and the ground offset are
interop defaults; Science Birds itself is not consulted.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

from .level import BlockType, GridConfig, LevelLayout, layout_from_blocks


@dataclass(frozen=True)
class XmlMapping:
    cell: float = 0.43
    ground_y: float = -3.5
    material: str = "stone"
    names: dict = field(
        default_factory=lambda: {BlockType.B11: "SquareSmall", BlockType.B13: "RectMedium", BlockType.B31: "RectMedium"}
    )
    rotations: dict = field(default_factory=lambda: {BlockType.B11: 0, BlockType.B13: 90, BlockType.B31: 0})

    def block_type(self, name: str, rotation: float) -> BlockType:
        for bt in BlockType:
            if self.names[bt] == name and self.rotations[bt] == int(round(rotation)) % 180:
                return bt
        raise ValueError(f"no block type for {name!r} at rotation {rotation}")


DEFAULT_MAPPING = XmlMapping()


def _fmt(v: float) -> str:
    # shortest repr, with -0.0 folded to 0 so output is stable
    return repr(round(v, 10) + 0.0)


def export_xml(layout: LevelLayout, mapping: XmlMapping = DEFAULT_MAPPING) -> str:
    cfg = layout.config
    root = ET.Element("Level", width=str(cfg.width), height=str(cfg.height))
    objects = ET.SubElement(root, "GameObjects")
    for b in layout.blocks:
        x = (b.x - cfg.width / 2 + b.width / 2) * mapping.cell
        y = (b.y + b.height / 2) * mapping.cell + mapping.ground_y
        ET.SubElement(
            objects,
            "Block",
            type=mapping.names[b.block_type],
            material=mapping.material,
            x=_fmt(x),
            y=_fmt(y),
            rotation=str(mapping.rotations[b.block_type]),
        )
    ET.indent(root)
    return '<?xml version="1.0" encoding="utf-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def parse_xml(text: str, mapping: XmlMapping = DEFAULT_MAPPING) -> LevelLayout:
    """Inverse of :func:`export_xml`; block ids follow document order."""
    root = ET.fromstring(text)
    if root.tag != "Level":
        raise ValueError(f"root element is {root.tag!r}, expected 'Level'")
    cfg = GridConfig(int(root.get("width", 20)), int(root.get("height", 16)))
    blocks = []
    objects = root.find("GameObjects")
    for el in objects.iter("Block") if objects is not None else ():
        bt = mapping.block_type(el.get("type"), float(el.get("rotation", 0)))
        gx = float(el.get("x")) / mapping.cell + cfg.width / 2 - bt.width / 2
        gy = (float(el.get("y")) - mapping.ground_y) / mapping.cell - bt.height / 2
        blocks.append((bt, int(round(gx)), int(round(gy))))
    return layout_from_blocks(cfg, blocks)
