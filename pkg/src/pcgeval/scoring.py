"""Character weights, weighted trial scores, normalisation and ranking."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import IncompleteRecords


@dataclass(frozen=True)
class TrialRecord:
    prompt_id: str
    letter: str
    trial: int  # 1-based
    st: float
    si: float


@dataclass(frozen=True)
class CompetitionConfig:
    prompts: tuple[str, ...]
    characters: tuple[str, ...]
    trials: int

    def __post_init__(self):
        if self.trials < 1 or not self.prompts or not self.characters:
            raise ValueError("need T >= 1, at least one prompt and one character")
        if len(set(self.prompts)) != len(self.prompts) or len(set(self.characters)) != len(self.characters):
            raise ValueError("prompt ids and characters must be unique")

    @property
    def P(self) -> int:
        return len(self.prompts)

    @property
    def C(self) -> int:
        return len(self.characters)

    @property
    def T(self) -> int:
        return self.trials

    @classmethod
    def infer(cls, records: Iterable[TrialRecord]) -> "CompetitionConfig":
        """Prompts and letters in first-seen order, T = highest trial number."""
        prompts, letters, t = {}, {}, 0
        for r in records:
            prompts.setdefault(r.prompt_id, None)
            letters.setdefault(r.letter, None)
            t = max(t, r.trial)
        return cls(tuple(prompts), tuple(letters), t)


@dataclass(frozen=True)
class CharacterWeight:
    w_st: float
    w_si: float

    @property
    def weight(self) -> float:
        return self.w_st * self.w_si


@dataclass
class CompetitionResult:
    config: CompetitionConfig
    weights: dict[str, CharacterWeight]
    trial: np.ndarray  # [P, C, T]
    char: np.ndarray  # [P, C]
    prompt: np.ndarray  # [P]
    norm_prompt: np.ndarray  # [P]
    competition: float
    zero_competition: bool = False

    def norm_of(self, prompt_id: str) -> float:
        return float(self.norm_prompt[self.config.prompts.index(prompt_id)])


@dataclass(frozen=True)
class Standing:
    rank: int
    prompt_id: str
    norm_prompt: float
    words: int
    co_ranked: bool = False


def score_arrays(records: Iterable[TrialRecord], cfg: CompetitionConfig) -> tuple[np.ndarray, np.ndarray]:
    """(st, si) arrays shaped [P, C, T]; every slot must be filled exactly once."""
    st = np.full((cfg.P, cfg.C, cfg.T), np.nan)
    si = np.full((cfg.P, cfg.C, cfg.T), np.nan)
    p_idx = {p: i for i, p in enumerate(cfg.prompts)}
    c_idx = {c: i for i, c in enumerate(cfg.characters)}
    for r in records:
        try:
            k, j, i = p_idx[r.prompt_id], c_idx[r.letter], r.trial - 1
        except KeyError as exc:
            raise IncompleteRecords(f"record outside configuration: {r}") from exc
        if not 0 <= i < cfg.T:
            raise IncompleteRecords(f"trial {r.trial} outside 1..{cfg.T}")
        if not np.isnan(st[k, j, i]):
            raise IncompleteRecords(f"duplicate record for {r.prompt_id}/{r.letter}/{r.trial}")
        st[k, j, i], si[k, j, i] = r.st, r.si
    missing = np.argwhere(np.isnan(st))
    if len(missing):
        k, j, i = missing[0]
        raise IncompleteRecords(
            f"{len(missing)} missing record(s), first: {cfg.prompts[k]}/{cfg.characters[j]}/{i + 1}"
        )
    return st, si


def char_weights(records: Iterable[TrialRecord], cfg: CompetitionConfig) -> dict[str, CharacterWeight]:
    st, si = score_arrays(records, cfg)
    return _weights(st, si, cfg)


def _weights(st: np.ndarray, si: np.ndarray, cfg: CompetitionConfig) -> dict[str, CharacterWeight]:
    floor = 1 / cfg.C
    out = {}
    for j, c in enumerate(cfg.characters):
        mean_st = float(st[:, j, :].sum()) / (cfg.P * cfg.T)
        mean_si = float(si[:, j, :].sum()) / (cfg.P * cfg.T)
        out[c] = CharacterWeight(max(1 - mean_st, floor), max(1 - mean_si, floor))
    return out


def trial_score(weight: float, st: float, si: float) -> float:
    return weight * st * si


def aggregate(
    records: Iterable[TrialRecord],
    cfg: CompetitionConfig,
    weights: Mapping[str, CharacterWeight] | None = None,
) -> CompetitionResult:
    """Compute every score level. ``weights`` freezes weights from a reference pool.

    When the competition total is zero every normalised score is 0 and the
    result is flagged ``zero_competition``; ranking then falls back to
    prompt length alone.
    """
    st, si = score_arrays(records, cfg)
    if weights is None:
        weights = _weights(st, si, cfg)
    w = np.array([weights[c].weight for c in cfg.characters])
    trial = w[None, :, None] * st * si
    char = trial.sum(axis=2) / cfg.T
    prompt = char.sum(axis=1) / cfg.C
    competition = float(prompt.sum())
    zero = competition == 0
    norm = np.zeros(cfg.P) if zero else 100 * prompt / competition
    return CompetitionResult(cfg, dict(weights), trial, char, prompt, norm, competition, zero)


def rank_scores(
    scores: Mapping[str, float], prompt_lengths: Mapping[str, int], rel_tol: float = 1e-12
) -> list[Standing]:
    """Descending score, then ascending word count; exact ties share a rank."""
    ids = sorted(scores, key=lambda p: (-scores[p], prompt_lengths[p], p))

    def same(a, b):
        return math.isclose(scores[a], scores[b], rel_tol=rel_tol, abs_tol=1e-12) and (
            prompt_lengths[a] == prompt_lengths[b]
        )

    standings = []
    for pos, p in enumerate(ids):
        if pos and same(p, ids[pos - 1]):
            rank = standings[-1].rank
        else:
            rank = pos + 1
        tied = (pos and same(p, ids[pos - 1])) or (pos + 1 < len(ids) and same(p, ids[pos + 1]))
        standings.append(Standing(rank, p, float(scores[p]), prompt_lengths[p], bool(tied)))
    return standings


def rank(result: CompetitionResult, prompt_lengths: Mapping[str, int]) -> list[Standing]:
    scores = {p: float(result.norm_prompt[k]) for k, p in enumerate(result.config.prompts)}
    return rank_scores(scores, prompt_lengths)


# -- CSV / summary ----------------------------------------------------------

RECORD_FIELDS = ["prompt_id", "letter", "trial", "st", "si"]


def read_records_csv(path: str | Path) -> list[TrialRecord]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = set(RECORD_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing column(s) {sorted(missing)}")
        return [
            TrialRecord(row["prompt_id"], row["letter"], int(row["trial"]), float(row["st"]), float(row["si"]))
            for row in reader
        ]


def write_records_csv(records: Sequence[TrialRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([r.prompt_id, r.letter, r.trial, repr(float(r.st)), repr(float(r.si))])


def read_weights_csv(path: str | Path) -> dict[str, CharacterWeight]:
    with open(path, newline="", encoding="utf-8") as f:
        return {row["letter"]: CharacterWeight(float(row["w_st"]), float(row["w_si"])) for row in csv.DictReader(f)}


def write_weights_csv(result: CompetitionResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["letter", "w_st", "w_si", "weight"])
        for c in result.config.characters:
            cw = result.weights[c]
            w.writerow([c, repr(float(cw.w_st)), repr(float(cw.w_si)), repr(float(cw.weight))])


def write_characters_csv(result: CompetitionResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["prompt_id", "letter", "char_score"])
        for k, p in enumerate(result.config.prompts):
            for j, c in enumerate(result.config.characters):
                w.writerow([p, c, repr(float(result.char[k, j]))])


def write_standings_csv(standings: Sequence[Standing], result: CompetitionResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["rank", "prompt_id", "norm_prompt", "prompt_score", "words", "co_ranked"])
        for s in standings:
            k = result.config.prompts.index(s.prompt_id)
            w.writerow([s.rank, s.prompt_id, repr(float(s.norm_prompt)), repr(float(result.prompt[k])), s.words, int(s.co_ranked)])


def summary(result: CompetitionResult, standings: Sequence[Standing]) -> dict:
    """Plain-data report; values rounded the way the published tables print them."""
    cfg = result.config
    return {
        "prompts": list(cfg.prompts),
        "characters": list(cfg.characters),
        "trials": cfg.T,
        "competition": result.competition,
        "zero_competition": result.zero_competition,
        "weights": {
            c: {"w_st": round(cw.w_st, 3), "w_si": round(cw.w_si, 3), "weight": round(cw.weight, 3)}
            for c, cw in result.weights.items()
        },
        "standings": [
            {"rank": s.rank, "prompt_id": s.prompt_id, "norm_prompt": round(s.norm_prompt, 2), "words": s.words,
             "co_ranked": s.co_ranked}
            for s in standings
        ],
    }


def format_report(result: CompetitionResult, standings: Sequence[Standing]) -> str:
    cfg = result.config
    lines = ["Character weights", "letter  w_st   w_si   weight"]
    for c in cfg.characters:
        cw = result.weights[c]
        lines.append(f"{c:<6}  {cw.w_st:.3f}  {cw.w_si:.3f}  {cw.weight:.3f}")
    lines += ["", "Standings", "rank  prompt              norm_prompt  words"]
    for s in standings:
        mark = " (co)" if s.co_ranked else ""
        lines.append(f"{s.rank:<4}  {s.prompt_id:<18}  {s.norm_prompt:11.2f}  {s.words:5d}{mark}")
    if result.zero_competition:
        lines.append("note: every prompt scored zero; order is by prompt length only")
    return "\n".join(lines) + "\n"
