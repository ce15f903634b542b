"""`spiral` command line: run the improvement-loop harness, generate
synthetic corpora, re-render reports, or serve the annotation API.

Exit status is nonzero whenever a platform invariant fails while the
harness drives it.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import yaml

from .config import load_config
from .errors import SpiralError
from .harness import report as report_mod
from .harness.corpus import corpus_pdf, corpus_to_json, generate_corpus
from .harness.predictor import MockPredictorConfig
from .harness.runner import HarnessViolation, SpiralRunConfig, run_spiral


@click.group()
def main():
    """Document annotation service and its improvement-loop harness."""


def _run_config(path: str | None, overrides: dict) -> SpiralRunConfig:
    raw: dict = {}
    if path:
        raw = yaml.safe_load(Path(path).read_text()) or {}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    predictor_raw = raw.pop("predictor", {})
    predictor = MockPredictorConfig(
        **{k: predictor_raw[k] for k in predictor_raw}
    )
    known = {"iterations", "pages_per_iteration", "workers", "dpi"}
    kwargs = {k: raw[k] for k in known if k in raw}
    return SpiralRunConfig(predictor=predictor, **kwargs)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--pages", "pages_per_iteration", type=int, default=None)
def run(config_path, seed, out_dir, iterations, pages_per_iteration):
    """Run the full loop with mock workers and report per-iteration metrics."""
    try:
        cfg = _run_config(
            config_path,
            {"iterations": iterations, "pages_per_iteration": pages_per_iteration},
        )
        reports = run_spiral(cfg, seed=seed)
    except (HarnessViolation, SpiralError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(report_mod.render_table(reports))
    if out_dir:
        paths = report_mod.write_outputs(reports, out_dir)
        click.echo(f"\nwrote {paths['jsonl']}, {paths['csv']}")
        for fig in paths["figures"]:
            click.echo(f"wrote {fig}")


@main.command()
@click.option("--pages", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def corpus(pages, seed, out_dir):
    """Generate a deterministic synthetic ground-truth corpus."""
    try:
        data = generate_corpus(seed=seed, n_pages=pages)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    text = corpus_to_json(data)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "corpus.json").write_text(text)
        (out / "corpus.pdf").write_bytes(corpus_pdf(data))
        click.echo(f"wrote {out / 'corpus.json'} and {out / 'corpus.pdf'}")
    else:
        click.echo(text)


@main.command()
@click.option("--reports", "reports_path", type=click.Path(exists=True), required=True)
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["table", "json-lines"]),
    default="table",
    show_default=True,
)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def report(reports_path, fmt, out_dir):
    """Re-render saved iteration reports as a table or JSON lines."""
    reports = report_mod.load_reports(reports_path)
    if not reports:
        click.echo("error: no reports in file", err=True)
        sys.exit(1)
    if fmt == "table":
        click.echo(report_mod.render_table(reports))
    else:
        click.echo(report_mod.render_json_lines(reports), nl=False)
    if out_dir:
        paths = report_mod.write_outputs(reports, out_dir)
        click.echo(f"wrote {paths['csv']}", err=True)
        for fig in paths["figures"]:
            click.echo(f"wrote {fig}", err=True)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(config_path, host):
    """Serve the annotation API."""
    import uvicorn

    from .api import build_app
    from .service import AnnotationService

    config = load_config(config_path)
    app = build_app(AnnotationService(config))
    uvicorn.run(app, host=host, port=config.port)


if __name__ == "__main__":
    main()
