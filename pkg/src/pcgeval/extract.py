"""Pull the last fenced code block out of a chat response and parse its ab_drop() calls."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import EmptyScript, NoCodeFence
from .level import BlockType, DropCommand

FENCE = "```"

_LANG_TAG = re.compile(r"[\w+#.\-]*")
_CALL = re.compile(
    r"ab_drop\s*\(\s*(['\"]?)((?i:b11|b13|b31))\1\s*,\s*([+-]?\d+)\s*\)"
)


@dataclass(frozen=True)
class CommandScript:
    commands: tuple[DropCommand, ...]
    ignored_lines: int


def extract_last_code_fence(response: str) -> str:
    """Text strictly inside the final complete pair of ``` markers.

    Markers pair up in document order; an unpaired trailing marker is ignored.
    A language tag on the opening line is dropped.
    """
    positions = []
    start = 0
    while (pos := response.find(FENCE, start)) != -1:
        positions.append(pos)
        start = pos + len(FENCE)
    if len(positions) < 2:
        raise NoCodeFence(f"found {len(positions)} ``` marker(s), need at least two")
    n_pairs = len(positions) // 2
    open_pos, close_pos = positions[2 * n_pairs - 2], positions[2 * n_pairs - 1]
    body = response[open_pos + len(FENCE) : close_pos]
    first, nl, rest = body.partition("\n")
    if nl and _LANG_TAG.fullmatch(first.strip()):
        return rest
    return body


def parse_drop_commands(code: str) -> CommandScript:
    """Collect literal ``ab_drop(<block>, <int>)`` calls line by line.

    Loops are not expanded and non-literal positions are not evaluated; such
    lines just count as ignored.
    """
    commands = []
    ignored = 0
    for line in code.splitlines():
        found = [
            DropCommand(BlockType.parse(m.group(2)), int(m.group(3)))
            for m in _CALL.finditer(line)
        ]
        if found:
            commands.extend(found)
        else:
            ignored += 1
    if not commands:
        raise EmptyScript(f"no ab_drop() calls found ({ignored} line(s) ignored)")
    return CommandScript(tuple(commands), ignored)


def extract_commands(response: str) -> CommandScript:
    return parse_drop_commands(extract_last_code_fence(response))


def format_commands(commands) -> str:
    return "".join(f"{c}\n" for c in commands)
