"""Letter probabilities for a capture, via built-in templates or an external model."""

from __future__ import annotations

import json
import math
import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import httpx
import numpy as np

from .errors import BackendUnavailable
from .level import BlockType, GridConfig, LevelLayout, layout_from_blocks
from .raster import encode_png, read_image

LETTERS = string.ascii_uppercase
TEMPLATE_SIZE = 64
DEFAULT_TAU = 0.1


@dataclass(frozen=True)
class SimilarityResult:
    probs: tuple[float, ...]
    model_id: str

    def __post_init__(self):
        if len(self.probs) != 26:
            raise ValueError(f"expected 26 probabilities, got {len(self.probs)}")

    def prob(self, letter: str) -> float:
        return self.probs[LETTERS.index(letter)]

    @property
    def argmax(self) -> str:
        return LETTERS[int(np.argmax(self.probs))]

    def to_dict(self) -> dict:
        return {"model_id": self.model_id, "probs": dict(zip(LETTERS, self.probs))}

    @classmethod
    def from_dict(cls, data: Mapping) -> "SimilarityResult":
        return cls(tuple(float(data["probs"][c]) for c in LETTERS), data["model_id"])


def uniform(model_id: str) -> SimilarityResult:
    return SimilarityResult(tuple([1 / 26] * 26), model_id)


def softmax(z: Sequence[float], tau: float = DEFAULT_TAU) -> np.ndarray:
    if tau <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(z, dtype=float) / tau
    e = np.exp(z - z.max())
    return e / e.sum()


def similarity_score(result: SimilarityResult, target: str) -> float:
    return result.prob(target)


# -- bitmap normalisation ---------------------------------------------------


def _runs(lines: np.ndarray) -> tuple[list[int], list[int]]:
    """Start index and length of each run of identical consecutive lines."""
    starts, lengths = [0], []
    for i in range(1, len(lines)):
        if not np.array_equal(lines[i], lines[i - 1]):
            lengths.append(i - starts[-1])
            starts.append(i)
    lengths.append(len(lines) - starts[-1])
    return starts, lengths


def _fit_pitch(lengths: list[int]) -> tuple[float, list[int]] | None:
    shortest = min(lengths)
    for k in range(1, 5):
        pitch = shortest / k
        for _ in range(3):
            counts = [max(1, math.floor(n / pitch + 0.5)) for n in lengths]
            pitch = sum(lengths) / sum(counts)
        if all(abs(n - c * pitch) <= 2.0 for n, c in zip(lengths, counts)):
            return pitch, counts
    return None


def snap_to_lattice(mask: np.ndarray) -> np.ndarray | None:
    """Recover the cell bitmap behind a rendered block image.

    Captures are unions of grid-aligned rectangles whose edges round to
    slightly uneven pixel positions. Collapsing identical rows/columns and
    dividing run lengths by a common pitch undoes that, so whole-cell shifts
    give identical bitmaps. Returns None if the runs don't fit a lattice.
    """
    row_starts, row_lengths = _runs(mask)
    rows = mask[row_starts]
    col_starts, col_lengths = _runs(rows.T)
    cells = rows[:, col_starts]
    fit = _fit_pitch(row_lengths + col_lengths)
    if fit is None:
        return None
    counts = fit[1]
    row_counts, col_counts = counts[: len(row_lengths)], counts[len(row_lengths) :]
    return np.repeat(np.repeat(cells, row_counts, axis=0), col_counts, axis=1)


def tight_crop(mask: np.ndarray) -> np.ndarray:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return mask[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]


def fit_square(bitmap: np.ndarray, size: int = TEMPLATE_SIZE) -> np.ndarray:
    """Nearest-neighbour rescale into a size x size square, aspect kept, centred."""
    h, w = bitmap.shape
    m = max(h, w)
    ht = max(1, math.floor(h * size / m + 0.5))
    wt = max(1, math.floor(w * size / m + 0.5))
    rows = (np.arange(ht) * h) // ht
    cols = (np.arange(wt) * w) // wt
    out = np.zeros((size, size), dtype=bool)
    top, left = (size - ht) // 2, (size - wt) // 2
    out[top : top + ht, left : left + wt] = bitmap[np.ix_(rows, cols)]
    return out


def normalize(mask: np.ndarray, size: int = TEMPLATE_SIZE) -> np.ndarray:
    """Boolean black-pixel mask -> size x size normalised bitmap."""
    crop = tight_crop(mask)
    cells = snap_to_lattice(crop)
    return fit_square(crop if cells is None else cells, size)


def dice(a: np.ndarray, b: np.ndarray) -> float:
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 0.0
    return 2 * int(np.logical_and(a, b).sum()) / total


# -- templates --------------------------------------------------------------


@dataclass(frozen=True)
class TemplateSet:
    bitmaps: Mapping[str, np.ndarray]

    def __post_init__(self):
        if sorted(self.bitmaps) != list(LETTERS):
            raise ValueError("a template set needs exactly one bitmap per letter A-Z")
        for letter, bm in self.bitmaps.items():
            if not bm.any():
                raise ValueError(f"template {letter} is blank")

    @classmethod
    def from_directory(cls, path: str | Path) -> "TemplateSet":
        """Load ``A.png`` .. ``Z.png`` (black glyph on white)."""
        path = Path(path)
        return cls({c: normalize(read_image(path / f"{c}.png") < 128) for c in LETTERS})


def parse_glyphs(text: str) -> dict[str, np.ndarray]:
    glyphs: dict[str, np.ndarray] = {}
    letter, rows = None, []

    def flush():
        if letter is not None:
            glyphs[letter] = np.array([[ch == "#" for ch in r] for r in rows], dtype=bool)

    for raw in text.splitlines():
        line = raw.strip()
        if not line or (line.startswith("#") and not set(line) <= {"#", "."}):
            continue
        if len(line) == 1 and line in LETTERS:
            flush()
            letter, rows = line, []
        else:
            rows.append(line)
    flush()
    return glyphs


@lru_cache(maxsize=1)
def reference_glyphs() -> dict[str, np.ndarray]:
    """Cell bitmaps (row 0 = top) of the bundled block-letter font."""
    text = resources.files("pcgeval").joinpath("data/glyphs.txt").read_text(encoding="utf-8")
    return parse_glyphs(text)


def glyph_layout(letter: str, config: GridConfig | None = None) -> LevelLayout:
    """The reference glyph as a layout of b11 blocks, bottom-centred on the grid."""
    config = config or GridConfig()
    bitmap = reference_glyphs()[letter]
    h, w = bitmap.shape
    x0 = (config.width - w) // 2
    blocks = [
        (BlockType.B11, x0 + c, h - 1 - r)
        for r in range(h)
        for c in range(w)
        if bitmap[r, c]
    ]
    return layout_from_blocks(config, blocks)


@lru_cache(maxsize=1)
def builtin_templates() -> TemplateSet:
    return TemplateSet({c: fit_square(tight_crop(bm)) for c, bm in reference_glyphs().items()})


def template_scores(image: np.ndarray, templates: TemplateSet) -> np.ndarray:
    """Dice overlap between the normalised capture and each letter template."""
    a = normalize(np.asarray(image) < 128)
    return np.array([dice(a, templates.bitmaps[c]) for c in LETTERS])


# -- backends ---------------------------------------------------------------


class TemplateClassifier:
    def __init__(self, templates: TemplateSet | None = None, tau: float = DEFAULT_TAU):
        self.templates = templates or builtin_templates()
        self.tau = tau
        self.model_id = f"builtin-dice-template(tau={tau})"

    def __call__(self, image: np.ndarray) -> SimilarityResult:
        image = np.asarray(image)
        if not (image < 128).any():
            return uniform(self.model_id)
        p = softmax(template_scores(image, self.templates), self.tau)
        return SimilarityResult(tuple(float(x) for x in p), self.model_id)


class ExternalClassifier:
    """Client for a remote letter model.

    Wire contract: POST the PNG bytes (``image/png``) to ``url``; a 200
    response carries a JSON object mapping each letter A-Z to a probability.
    Any other status, or an unreachable host, raises BackendUnavailable.
    """

    def __init__(self, url: str, timeout: float = 30.0, client: httpx.Client | None = None):
        self.url = url
        self.timeout = timeout
        self._client = client
        self.model_id = f"external:{url}"

    def __call__(self, image: np.ndarray) -> SimilarityResult:
        body = encode_png(image)
        client = self._client or httpx.Client(timeout=self.timeout)
        try:
            resp = client.post(self.url, content=body, headers={"Content-Type": "image/png"})
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"{self.url}: {exc}") from exc
        finally:
            if self._client is None:
                client.close()
        if resp.status_code != 200:
            raise BackendUnavailable(f"{self.url} answered HTTP {resp.status_code}")
        try:
            data = resp.json()
            probs = [float(data[c]) for c in LETTERS]
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise BackendUnavailable(f"{self.url} sent a malformed response: {exc}") from exc
        if any(p < 0 for p in probs) or sum(probs) <= 0:
            raise BackendUnavailable(f"{self.url} sent invalid probabilities")
        total = sum(probs)
        return SimilarityResult(tuple(p / total for p in probs), self.model_id)


Classifier = Callable[[np.ndarray], SimilarityResult]


def classify(image: np.ndarray, backend: Classifier | None = None) -> SimilarityResult:
    return (backend or TemplateClassifier())(image)
