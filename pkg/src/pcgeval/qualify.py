"""Prompt qualification: character whitelist, word limit and the <OBJECT> marker."""

from __future__ import annotations

import string
from dataclasses import dataclass, field

from .errors import MissingObjectMarker

OBJECT_MARKER = "<OBJECT>"
MAX_WORDS = 900

ALLOWED_SYMBOLS = frozenset("~/\\+-*`'\"“”‘’.:;?–,!@#$%^&()_=[]{}|<>")
# Em-dash appears in the organisers' own sample prompt, so it is accepted too.
EXTRA_ALLOWED = frozenset("\u2014")
ALLOWED_CHARACTERS = frozenset(
    string.ascii_letters + string.digits + " \n\t\r"
) | ALLOWED_SYMBOLS | EXTRA_ALLOWED


@dataclass(frozen=True)
class DisallowedCharacter:
    position: int
    char: str

    def describe(self) -> str:
        return f"disallowed character {self.char!r} (U+{ord(self.char):04X}) at position {self.position}"


@dataclass(frozen=True)
class WordLimitExceeded:
    count: int
    limit: int = MAX_WORDS

    def describe(self) -> str:
        return f"prompt has {self.count} words, limit is {self.limit}"


@dataclass(frozen=True)
class MissingObjectMarkerViolation:
    def describe(self) -> str:
        return f"prompt does not contain {OBJECT_MARKER}"


@dataclass(frozen=True)
class QualificationReport:
    violations: tuple = field(default_factory=tuple)

    @property
    def qualified(self) -> bool:
        return not self.violations

    def reasons(self) -> list[str]:
        return [v.describe() for v in self.violations]


def check_characters(prompt: str) -> list[DisallowedCharacter]:
    return [DisallowedCharacter(i, ch) for i, ch in enumerate(prompt) if ch not in ALLOWED_CHARACTERS]


def count_words(prompt: str) -> int:
    return len(prompt.split())


def qualify(prompt: str, max_words: int = MAX_WORDS) -> QualificationReport:
    violations: list = list(check_characters(prompt))
    n = count_words(prompt)
    if n > max_words:
        violations.append(WordLimitExceeded(n, max_words))
    if OBJECT_MARKER not in prompt:
        violations.append(MissingObjectMarkerViolation())
    return QualificationReport(tuple(violations))


def substitute_object(prompt: str, target: str) -> str:
    """Replace every ``<OBJECT>`` with the single uppercase letter ``target``."""
    if len(target) != 1 or target not in string.ascii_uppercase:
        raise ValueError(f"target must be one letter A-Z, got {target!r}")
    if OBJECT_MARKER not in prompt:
        raise MissingObjectMarker(f"prompt does not contain {OBJECT_MARKER}")
    # a replacement can complete a new marker ("<OBJEC<OBJECT>>" with T); each pass shrinks the text
    while OBJECT_MARKER in prompt:
        prompt = prompt.replace(OBJECT_MARKER, target)
    return prompt
