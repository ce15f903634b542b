from itertools import count

import pytest
from click.testing import CliRunner

from spiral.cli import main as cli_main
from spiral.errors import ConfigInvalid
from spiral.harness import (
    MockPredictorConfig,
    SpiralRunConfig,
    corpus_pdf,
    corpus_to_json,
    decayed,
    generate_corpus,
    predict_layout,
    render_json_lines,
    render_table,
    run_spiral,
)
from spiral.harness.predictor import corrupt_text
from spiral.harness.report import load_reports, render_csv, save_figures
from spiral.metrics import iou
from spiral.model import validate


def _fake_clock():
    counter = count()
    return lambda: float(next(counter))


# ---------------------------------------------------------------------------
# Corpus


def test_corpus_is_deterministic():
    a = generate_corpus(seed=7, n_pages=5)
    b = generate_corpus(seed=7, n_pages=5)
    assert corpus_to_json(a) == corpus_to_json(b)
    assert corpus_pdf(a) == corpus_pdf(b)


def test_corpus_rejects_zero_pages():
    with pytest.raises(ValueError):
        generate_corpus(seed=1, n_pages=0)


def test_corpus_blocks_are_valid_and_low_overlap():
    corpus = generate_corpus(seed=3, n_pages=10)
    for page in corpus.pages:
        assert 3 <= len(page.blocks) <= 8
        for block in page.blocks:
            assert validate(block.bbox) == []
        for i, a in enumerate(page.blocks):
            for b in page.blocks[i + 1 :]:
                assert iou(a.bbox, b.bbox) < 0.2


def test_corpus_label_restriction():
    corpus = generate_corpus(seed=3, n_pages=4, labels=("content",))
    assert all(b.label_id == "content" for p in corpus.pages for b in p.blocks)


# ---------------------------------------------------------------------------
# Predictor


def test_predictions_deterministic_and_valid():
    corpus = generate_corpus(seed=5, n_pages=3)
    cfg = MockPredictorConfig(seed=5)
    for page in corpus.pages:
        a = predict_layout(cfg, page, corpus.labels, iteration=1)
        b = predict_layout(cfg, page, corpus.labels, iteration=1)
        assert a == b
        for pred in a:
            from spiral.model import bbox_from_wire

            assert validate(bbox_from_wire(pred["bbox"])) == []
            assert 0 <= pred["confidence"] <= 1


def test_decay_shrinks_every_noise_parameter():
    cfg = MockPredictorConfig(
        box_noise_sigma=0.1, label_flip_prob=0.4, miss_prob=0.4, char_error_prob=0.3, decay=0.5
    )
    later = decayed(cfg, 2)
    assert later.box_noise_sigma == pytest.approx(0.025)
    assert later.label_flip_prob == pytest.approx(0.1)
    assert later.miss_prob == pytest.approx(0.1)
    assert later.char_error_prob == pytest.approx(0.075)


def test_decay_one_keeps_parameters():
    cfg = MockPredictorConfig(decay=1.0)
    assert decayed(cfg, 3) == cfg


def test_zero_noise_predicts_ground_truth_exactly():
    corpus = generate_corpus(seed=2, n_pages=2)
    cfg = MockPredictorConfig(
        seed=2, box_noise_sigma=0.0, label_flip_prob=0.0, miss_prob=0.0, char_error_prob=0.0
    )
    for page in corpus.pages:
        preds = predict_layout(cfg, page, corpus.labels, 0)
        assert len(preds) == len(page.blocks)
        for pred, block in zip(preds, page.blocks):
            assert pred["bbox"] == pytest.approx(block.bbox.as_list(), abs=1e-9)
            assert pred["label"] == block.label_id
        assert corrupt_text(cfg, page.blocks[0].text, 0, page.index, 0) == page.blocks[0].text


def test_predictor_config_validation():
    with pytest.raises(ConfigInvalid):
        MockPredictorConfig(miss_prob=1.5).check()
    with pytest.raises(ConfigInvalid):
        MockPredictorConfig(decay=0).check()


# ---------------------------------------------------------------------------
# Runner


def test_run_spiral_single_iteration_full_lifecycle():
    cfg = SpiralRunConfig(iterations=1, pages_per_iteration=2)
    reports = run_spiral(cfg, seed=21, clock=_fake_clock())
    assert len(reports) == 1
    report = reports[0]
    assert report.n_pages == 2
    assert 0 <= report.map_score <= 1
    assert report.mean_cer >= 0
    assert report.edit_count >= 0


def test_run_spiral_byte_identical_given_seed_and_clock():
    cfg = SpiralRunConfig(iterations=2, pages_per_iteration=3)
    a = run_spiral(cfg, seed=11, clock=_fake_clock())
    b = run_spiral(cfg, seed=11, clock=_fake_clock())
    assert render_json_lines(a) == render_json_lines(b)


def test_run_spiral_rejects_bad_config():
    with pytest.raises(ConfigInvalid):
        run_spiral(SpiralRunConfig(iterations=0))


# ---------------------------------------------------------------------------
# Reports


def _reports():
    from spiral.harness.runner import IterationReport

    return [
        IterationReport(0, 4, 0.2, 0.15, 30, 1.0),
        IterationReport(1, 4, 0.5, 0.08, 18, 1.1),
        IterationReport(2, 4, 0.8, 0.04, 9, 0.9),
    ]


def test_table_has_initial_plus_ordinal_columns():
    table = render_table(_reports())
    header = table.splitlines()[0]
    assert header.split(" | ")[0].strip() == "Metric"
    assert "Initial" in header and "1st" in header and "2nd" in header
    assert "mAP" in table and "human edits" in table


def test_render_empty_reports_rejected():
    with pytest.raises(ValueError):
        render_table([])
    with pytest.raises(ValueError):
        render_json_lines([])


def test_json_lines_round_trip(tmp_path):
    path = tmp_path / "reports.jsonl"
    path.write_text(render_json_lines(_reports()))
    again = load_reports(path)
    assert again == _reports()


def test_csv_and_figures(tmp_path):
    text = render_csv(_reports())
    assert text.splitlines()[0] == "iteration,n_pages,map,mean_cer,edit_count,wall_seconds"
    assert len(text.splitlines()) == 4
    figures = save_figures(_reports(), tmp_path)
    for fig in figures:
        assert fig.exists() and fig.stat().st_size > 1000


# ---------------------------------------------------------------------------
# CLI


def test_cli_corpus_and_report_round_trip(tmp_path):
    runner = CliRunner()
    result = runner.invoke(
        cli_main, ["corpus", "--pages", "2", "--seed", "4", "--out", str(tmp_path)]
    )
    assert result.exit_code == 0, result.output
    assert (tmp_path / "corpus.json").exists()
    assert (tmp_path / "corpus.pdf").read_bytes().startswith(b"%PDF")

    reports_file = tmp_path / "reports.jsonl"
    reports_file.write_text(render_json_lines(_reports()))
    result = runner.invoke(
        cli_main, ["report", "--reports", str(reports_file), "--format", "table"]
    )
    assert result.exit_code == 0
    assert "Initial" in result.output


def test_cli_corpus_zero_pages_fails():
    runner = CliRunner()
    result = runner.invoke(cli_main, ["corpus", "--pages", "0"])
    assert result.exit_code == 1


def test_cli_run_small(tmp_path):
    runner = CliRunner()
    result = runner.invoke(
        cli_main,
        [
            "run",
            "--seed",
            "2",
            "--iterations",
            "1",
            "--pages",
            "2",
            "--out",
            str(tmp_path / "out"),
        ],
    )
    assert result.exit_code == 0, result.output
    assert (tmp_path / "out" / "reports.csv").exists()
    assert (tmp_path / "out" / "map_trend.png").exists()
