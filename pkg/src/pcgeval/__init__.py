"""Evaluation pipeline for character-like Science Birds levels built from ab_drop() programs."""

from .level import (
    BlockType,
    DropCommand,
    GridConfig,
    LevelLayout,
    PlacedBlock,
    build_level,
    drop_block,
    footprint,
    occupancy,
    occupied_columns,
)
from .qualify import count_words, qualify, substitute_object
from .extract import extract_commands, extract_last_code_fence, parse_drop_commands
from .stability import compute_moving_set, stability_score
from .raster import render, write_image, read_image
from .similarity import TemplateClassifier, ExternalClassifier, classify, softmax, similarity_score
from .scoring import TrialRecord, CompetitionConfig, aggregate, char_weights, rank, trial_score
from .xmlio import export_xml, parse_xml
from .pipeline import Run, RunSettings

__version__ = "0.1.0"
