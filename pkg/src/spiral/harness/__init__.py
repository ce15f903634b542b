"""Deterministic end-to-end harness: synthetic corpora, mock workers, a
simulated human corrector, and per-iteration metric reports."""

from .corpus import Corpus, corpus_pdf, corpus_to_json, generate_corpus
from .predictor import MockPredictorConfig, decayed, predict_layout
from .report import render_csv, render_json_lines, render_table, save_figures, write_outputs
from .runner import HarnessViolation, IterationReport, SpiralRunConfig, run_spiral

__all__ = [
    "Corpus",
    "MockPredictorConfig",
    "SpiralRunConfig",
    "IterationReport",
    "HarnessViolation",
    "generate_corpus",
    "corpus_pdf",
    "corpus_to_json",
    "decayed",
    "predict_layout",
    "run_spiral",
    "render_table",
    "render_json_lines",
    "render_csv",
    "save_figures",
    "write_outputs",
]
