"""Stage-by-stage orchestration over an on-disk run directory.

Layout::

    <root>/<run-id>/manifest.json
    <root>/<run-id>/<team>/qualification.json
    <root>/<run-id>/<team>/<letter>/<trial>.md              raw chat response
    <root>/<run-id>/<team>/<letter>/<trial>.commands        canonical ab_drop lines
    <root>/<run-id>/<team>/<letter>/<trial>.xml             Science Birds level
    <root>/<run-id>/<team>/<letter>/<trial>.stability.json
    <root>/<run-id>/<team>/<letter>/<trial>.png             capture
    <root>/<run-id>/<team>/<letter>/<trial>.similarity.json
    <root>/<run-id>/scores/*.csv, summary.json, report.txt

Every stage skips items whose output already exists, so stages can be
re-run and resumed freely.
"""

from __future__ import annotations

import json
import logging
import os
import string
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

from . import scoring
from .chat import ChatClientConfig, HttpChatClient, MockChatClient
from .errors import (
    BackendUnavailable,
    DropError,
    ExtractionError,
    MissingArtifact,
    PCGEvalError,
    TransportError,
)
from .extract import extract_commands, format_commands, parse_drop_commands
from .level import GridConfig, build_level
from .qualify import count_words, qualify, substitute_object
from .raster import read_image, render, write_image
from .similarity import ExternalClassifier, SimilarityResult, TemplateClassifier
from .stability import read_moving_file, stability_score
from .xmlio import export_xml, parse_xml

log = logging.getLogger(__name__)

STAGES = ("qualify", "gather", "extract", "convert", "stability", "render", "classify", "score")
SCORE_FILES = ("records.csv", "weights.csv", "characters.csv", "standings.csv", "summary.json", "report.txt")

class EmptyLevel(PCGEvalError):
    kind = "EmptyLevel"


# Errors that say something about the trial itself; anything else leaves it pending.
TRIAL_ERRORS = (ExtractionError, DropError, EmptyLevel, ValueError)
INFRA_ERRORS = (TransportError, BackendUnavailable, OSError)


@dataclass
class RunSettings:
    prompts_dir: str = "prompts"
    letters: str = string.ascii_uppercase
    trials: int = 10
    strict: bool = False
    classifier: str = "builtin"
    physics: str = "builtin"
    parallelism: int = 1
    grid_width: int = 20
    grid_height: int = 16
    max_words: int = 900
    chat: dict = field(default_factory=lambda: ChatClientConfig().to_dict())

    def __post_init__(self):
        self.letters = "".join(dict.fromkeys(self.letters.upper()))
        bad = set(self.letters) - set(string.ascii_uppercase)
        if bad or not self.letters:
            raise ValueError(f"letters must be A-Z, got {self.letters!r}")
        if self.trials < 0:
            raise ValueError("trials must be >= 0")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    @property
    def grid(self) -> GridConfig:
        return GridConfig(self.grid_width, self.grid_height)

    @property
    def chat_config(self) -> ChatClientConfig:
        return ChatClientConfig(**self.chat)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _write_text(path: Path, text: str) -> None:
    _write_atomic(path, text.encode("utf-8"))


def _write_json(path: Path, data) -> None:
    _write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def _read_json(path: Path):
    if not path.exists():
        raise MissingArtifact(path)
    return json.loads(path.read_text(encoding="utf-8"))


class Run:
    """One evaluation run rooted at ``<root>/<run_id>``.

    ``chat_client`` (anything with ``complete(prompt) -> str``) and
    ``classifier`` (image -> SimilarityResult) may be injected; otherwise
    they are built from the settings.
    """

    def __init__(
        self,
        root: str | Path,
        run_id: str,
        settings: RunSettings | None = None,
        chat_client=None,
        classifier: Callable | None = None,
    ):
        self.dir = Path(root) / run_id
        self.run_id = run_id
        self._lock = threading.Lock()
        self.manifest_path = self.dir / "manifest.json"
        if self.manifest_path.exists():
            self.manifest = json.loads(self.manifest_path.read_text(encoding="utf-8"))
            stored = RunSettings(**self.manifest["settings"])
            self.settings = settings or stored
        else:
            self.settings = settings or RunSettings()
            self.manifest = {"run_id": run_id, "teams": {}, "trials": {}, "stages": {}, "errors": {}}
        self.manifest["settings"] = asdict(self.settings)
        self._chat_client = chat_client
        self._classifier = classifier

    # -- manifest ------------------------------------------------------------

    def save(self) -> bool:
        """Write the manifest if its content changed; report whether it did."""
        text = json.dumps(self.manifest, indent=2, sort_keys=True) + "\n"
        if self.manifest_path.exists() and self.manifest_path.read_text(encoding="utf-8") == text:
            return False
        _write_text(self.manifest_path, text)
        return True

    def _set_trial(self, key: str, **fields) -> None:
        with self._lock:
            self.manifest["trials"].setdefault(key, {}).update(fields)

    def _add_error(self, team: str, message: str) -> None:
        with self._lock:
            errors = self.manifest["errors"].setdefault(team, [])
            if message not in errors:
                errors.append(message)

    def trial_status(self, team: str, letter: str, trial: int) -> dict:
        return self.manifest["trials"].get(f"{team}/{letter}/{trial}", {"status": "pending"})

    # -- helpers -------------------------------------------------------------

    @property
    def qualified_teams(self) -> list[str]:
        return sorted(t for t, info in self.manifest["teams"].items() if info.get("qualified"))

    def path(self, team: str, letter: str, trial: int, suffix: str) -> Path:
        return self.dir / team / letter / f"{trial}{suffix}"

    def items(self) -> list[tuple[str, str, int]]:
        s = self.settings
        return [(t, c, i) for t in self.qualified_teams for c in s.letters for i in range(1, s.trials + 1)]

    def chat_client(self):
        if self._chat_client is None:
            self._chat_client = HttpChatClient(self.settings.chat_config)
        return self._chat_client

    def classifier(self):
        if self._classifier is None:
            choice = self.settings.classifier
            self._classifier = TemplateClassifier() if choice == "builtin" else ExternalClassifier(choice)
        return self._classifier

    def _physics_dir(self) -> Path | None:
        choice = self.settings.physics
        if choice == "builtin":
            return None
        return Path(choice.removeprefix("ingest:"))

    def _for_each(self, stage: str, output_suffix: str, work: Callable[[str, str, int], None]) -> int:
        """Run ``work`` over every pending item; returns how many were processed."""
        todo = []
        for team, letter, trial in self.items():
            status = self.trial_status(team, letter, trial)
            if status.get("status") == "failed" or self.path(team, letter, trial, output_suffix).exists():
                continue
            todo.append((team, letter, trial))

        def guarded(item):
            team, letter, trial = item
            key = f"{team}/{letter}/{trial}"
            try:
                work(team, letter, trial)
            except MissingArtifact:
                raise
            except TRIAL_ERRORS as exc:
                kind = getattr(exc, "kind", type(exc).__name__)
                self._set_trial(key, status="failed", stage=stage, reason=f"{kind}: {exc}")
            except INFRA_ERRORS as exc:
                self._add_error(team, f"{stage} {key}: {type(exc).__name__}: {exc}")

        if self.settings.parallelism > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.settings.parallelism) as pool:
                list(pool.map(guarded, todo))
        else:
            for item in todo:
                guarded(item)
        return len(todo)

    # -- stages ----------------------------------------------------------------

    def stage_qualify(self) -> int:
        prompts_dir = Path(self.settings.prompts_dir)
        files = sorted(prompts_dir.glob("*.txt"))
        if not files and not self.manifest["teams"]:
            raise MissingArtifact(prompts_dir / "*.txt")
        done = 0
        for f in files:
            team = f.stem
            if team in self.manifest["teams"]:
                continue
            text = f.read_text(encoding="utf-8")
            report = qualify(text, self.settings.max_words)
            info = {
                "prompt_path": str(f),
                "qualified": report.qualified,
                "violations": report.reasons(),
                "words": count_words(text),
            }
            _write_json(self.dir / team / "qualification.json", info)
            self.manifest["teams"][team] = info
            done += 1
        return done

    def _prompt(self, team: str) -> str:
        path = Path(self.manifest["teams"][team]["prompt_path"])
        if not path.exists():
            raise MissingArtifact(path)
        return path.read_text(encoding="utf-8")

    def _check_response(self, text: str) -> None:
        script = extract_commands(text)
        layout = build_level(self.settings.grid, script.commands, strict=self.settings.strict)
        if not layout.blocks:
            raise EmptyLevel(f"all {len(layout.rejected)} command(s) were rejected")

    def stage_gather(self) -> int:
        client = self.chat_client()
        max_retries = self.settings.chat_config.max_retries
        prompts = {t: self._prompt(t) for t in self.qualified_teams}

        def work(team, letter, trial):
            text = substitute_object(prompts[team], letter)
            reasons = []
            for attempt in range(max_retries + 1):
                response = client.complete(text)
                try:
                    self._check_response(response)
                except (ExtractionError, DropError, EmptyLevel) as exc:
                    reasons.append(f"{exc.kind}: {exc}")
                    continue
                _write_text(self.path(team, letter, trial, ".md"), response)
                status = "ok" if attempt == 0 else f"retried {attempt}"
                self._set_trial(f"{team}/{letter}/{trial}", status=status, attempts=attempt + 1)
                return
            # keep the last response for inspection; the trial is terminal
            _write_text(self.path(team, letter, trial, ".md"), response)
            self._set_trial(
                f"{team}/{letter}/{trial}",
                status="failed",
                stage="gather",
                reason=f"TrialExhausted after {max_retries + 1} attempt(s); last: {reasons[-1]}",
                attempts=max_retries + 1,
            )

        return self._for_each("gather", ".md", work)

    def stage_extract(self) -> int:
        def work(team, letter, trial):
            src = self.path(team, letter, trial, ".md")
            if not src.exists():
                raise MissingArtifact(src)
            script = extract_commands(src.read_text(encoding="utf-8"))
            _write_text(self.path(team, letter, trial, ".commands"), format_commands(script.commands))
            self._set_trial(f"{team}/{letter}/{trial}", ignored_lines=script.ignored_lines)

        return self._for_each("extract", ".commands", work)

    def stage_convert(self) -> int:
        def work(team, letter, trial):
            src = self.path(team, letter, trial, ".commands")
            if not src.exists():
                raise MissingArtifact(src)
            script = parse_drop_commands(src.read_text(encoding="utf-8"))
            layout = build_level(self.settings.grid, script.commands, strict=self.settings.strict)
            self._set_trial(
                f"{team}/{letter}/{trial}",
                rejected=[f"{cmd}: {kind}" for cmd, kind in layout.rejected],
            )
            if not layout.blocks:
                raise EmptyLevel(f"all {len(layout.rejected)} command(s) were rejected")
            _write_text(self.path(team, letter, trial, ".xml"), export_xml(layout))

        return self._for_each("convert", ".xml", work)

    def _layout(self, team, letter, trial):
        src = self.path(team, letter, trial, ".xml")
        if not src.exists():
            raise MissingArtifact(src)
        return parse_xml(src.read_text(encoding="utf-8"))

    def stage_stability(self) -> int:
        physics = self._physics_dir()

        def work(team, letter, trial):
            layout = self._layout(team, letter, trial)
            moving = None
            if physics is not None:
                ingest = physics / team / letter / f"{trial}.txt"
                if not ingest.exists():
                    raise MissingArtifact(ingest)
                moving = read_moving_file(ingest)
            report = stability_score(layout, moving)
            data = report.to_dict() | {"source": "builtin" if physics is None else "ingest"}
            _write_json(self.path(team, letter, trial, ".stability.json"), data)

        return self._for_each("stability", ".stability.json", work)

    def stage_render(self) -> int:
        def work(team, letter, trial):
            layout = self._layout(team, letter, trial)
            stab = _read_json(self.path(team, letter, trial, ".stability.json"))
            write_image(render(layout, stab["moving"]), self.path(team, letter, trial, ".png"))

        return self._for_each("render", ".png", work)

    def stage_classify(self) -> int:
        backend = self.classifier()

        def work(team, letter, trial):
            src = self.path(team, letter, trial, ".png")
            if not src.exists():
                raise MissingArtifact(src)
            result = backend(read_image(src))
            data = result.to_dict() | {"target": letter, "si": result.prob(letter)}
            _write_json(self.path(team, letter, trial, ".similarity.json"), data)

        return self._for_each("classify", ".similarity.json", work)

    def records(self) -> tuple[list[scoring.TrialRecord], list[str]]:
        """Trial records of every fully evaluated team, plus teams left out."""
        records, excluded = [], []
        for team in self.qualified_teams:
            rows = []
            complete = True
            for letter in self.settings.letters:
                for trial in range(1, self.settings.trials + 1):
                    if self.trial_status(team, letter, trial).get("status") == "failed":
                        rows.append(scoring.TrialRecord(team, letter, trial, 0.0, 0.0))
                        continue
                    st_path = self.path(team, letter, trial, ".stability.json")
                    si_path = self.path(team, letter, trial, ".similarity.json")
                    if not (st_path.exists() and si_path.exists()):
                        complete = False
                        break
                    st = _read_json(st_path)["st"]
                    si = SimilarityResult.from_dict(_read_json(si_path)).prob(letter)
                    rows.append(scoring.TrialRecord(team, letter, trial, st, si))
                if not complete:
                    break
            if complete:
                records.extend(rows)
            else:
                excluded.append(team)
                self._add_error(team, "score: incomplete artifacts; team not scored")
        return records, excluded

    def stage_score(self, weights: dict | None = None) -> scoring.CompetitionResult | None:
        out = self.dir / "scores"
        if all((out / name).exists() for name in SCORE_FILES) and weights is None:
            return None
        if self.settings.trials == 0:
            return None
        records, excluded = self.records()
        if not records:
            return None
        cfg = scoring.CompetitionConfig.infer(records)
        cfg = replace(cfg, trials=self.settings.trials)
        result = scoring.aggregate(records, cfg, weights)
        lengths = {t: self.manifest["teams"][t]["words"] for t in cfg.prompts}
        standings = scoring.rank(result, lengths)
        out.mkdir(parents=True, exist_ok=True)
        scoring.write_records_csv(records, out / "records.csv")
        scoring.write_weights_csv(result, out / "weights.csv")
        scoring.write_characters_csv(result, out / "characters.csv")
        scoring.write_standings_csv(standings, result, out / "standings.csv")
        summary = scoring.summary(result, standings)
        summary["disqualified"] = {
            t: info["violations"] for t, info in sorted(self.manifest["teams"].items()) if not info["qualified"]
        }
        summary["excluded"] = excluded
        _write_json(out / "summary.json", summary)
        report = scoring.format_report(result, standings)
        for team, reasons in summary["disqualified"].items():
            report += f"disqualified: {team}: {'; '.join(reasons)}\n"
        for team in excluded:
            report += f"not scored: {team}: incomplete artifacts\n"
        _write_text(out / "report.txt", report)
        return result

    # -- drivers ---------------------------------------------------------------

    def run_stage(self, stage: str, **kwargs):
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
        if stage != "qualify" and not self.manifest["teams"]:
            raise MissingArtifact(self.manifest_path)
        result = getattr(self, f"stage_{stage}")(**kwargs)
        if result:
            self.manifest["stages"][stage] = _now()
        self.save()
        return result

    def run_all(self, weights: dict | None = None) -> scoring.CompetitionResult | None:
        for stage in STAGES[:-1]:
            self.run_stage(stage)
        result = self.run_stage("score", weights=weights)
        if result is None and (self.dir / "scores" / "standings.csv").exists():
            return self.load_result()
        return result

    def load_result(self) -> scoring.CompetitionResult:
        records = scoring.read_records_csv(self.dir / "scores" / "records.csv")
        cfg = replace(scoring.CompetitionConfig.infer(records), trials=self.settings.trials)
        return scoring.aggregate(records, cfg)


def gather_responses(prompt: str, characters: Iterable[str], trials: int, client, out_dir: str | Path) -> list[Path]:
    """Standalone response gathering: one fresh request per (letter, trial).

    Writes ``<out_dir>/<letter>/<trial>.md`` and returns the written paths.
    """
    out = Path(out_dir)
    written = []
    for letter in characters:
        text = substitute_object(prompt, letter)
        for trial in range(1, trials + 1):
            path = out / letter / f"{trial}.md"
            _write_text(path, client.complete(text))
            written.append(path)
    return written


def mock_client_from(path: str | Path) -> MockChatClient:
    return MockChatClient.from_directory(path)
