"""Operator entry points: serve the API, batch-analyze drawings, ingest
annotations, and print statistics.

Exit codes: 0 success, 1 partial failures during analysis, 2 usage or
configuration errors.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import click

from .config import Application, AppConfig, ConfigError
from .domain import RiskLevel, SubmissionSource, canonical_json
from .prompts import PromptError
from .taxonomy import TaxonomyError
from .evaluation import (
    CsvFormatError,
    export_annotations_csv,
    import_annotations_csv,
    stats_classification,
    stats_matching_rates,
)
from .orchestrator import Phase
from .storage import RawUpload, StorageError, export_store, ingest_submission

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


def _build_app(ctx_params: dict) -> Application:
    try:
        config = AppConfig.load(ctx_params.get("config"))
        if ctx_params.get("store"):
            config.store_path = Path(ctx_params["store"])
        if ctx_params.get("taxonomy"):
            config.taxonomy_path = Path(ctx_params["taxonomy"])
        if ctx_params.get("prompts_dir"):
            config.prompts_dir = Path(ctx_params["prompts_dir"])
        mode = ctx_params.get("provider_mode")
        if mode:
            if mode.startswith("mock:"):
                config.provider_mode = "mock"
                config.mock_script = Path(mode.split(":", 1)[1])
            elif mode in ("live", "mock"):
                config.provider_mode = mode
            else:
                raise ConfigError(f"provider mode must be 'live' or 'mock:<script>', got {mode!r}")
        if ctx_params.get("seed") is not None:
            config.seed = ctx_params["seed"]
        if config.provider_mode == "mock" and config.mock_script is None:
            raise ConfigError("mock provider mode requires a script path (mock:<path>)")
        return Application.build(config)
    except (ConfigError, TaxonomyError, PromptError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


def _common_options(fn):
    fn = click.option("--config", type=click.Path(path_type=Path), default=None,
                      help="JSON config file")(fn)
    fn = click.option("--store", type=click.Path(path_type=Path), default=None,
                      help="store database path override")(fn)
    fn = click.option("--taxonomy", type=click.Path(path_type=Path), default=None,
                      help="taxonomy file override")(fn)
    fn = click.option("--prompts-dir", type=click.Path(path_type=Path), default=None,
                      help="prompt templates directory override")(fn)
    fn = click.option("--provider-mode", default=None,
                      help="'live' or 'mock:<script path>'")(fn)
    fn = click.option("--seed", type=int, default=None, help="RNG seed for reproducible runs")(fn)
    return fn


@click.group()
def main():
    """HTP drawing screening pipeline."""


@main.command()
@_common_options
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host: str, port: int, **params):
    """Start the HTTP service."""
    import uvicorn

    from .api import create_app

    app = _build_app(params)
    click.echo(f"listening on http://{host}:{port} (mode: {app.config.provider_mode})")
    try:
        uvicorn.run(create_app(app), host=host, port=port, log_level="info")
    finally:
        app.close()


@main.command()
@_common_options
@click.argument("directory", type=click.Path(path_type=Path, exists=True, file_okay=False))
@click.option("--cohort", default=None, help="cohort tag applied to every submission")
def analyze(directory: Path, cohort: Optional[str], **params):
    """Batch-process every image in DIRECTORY, one report per image."""
    app = _build_app(params)
    images = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not images:
        click.echo("error: no images found in directory", err=True)
        sys.exit(2)

    skipped: list[str] = []
    session_ids: list[str] = []
    for path in images:
        upload = RawUpload(data=path.read_bytes(), grade_tag=cohort)
        try:
            submission, _ = ingest_submission(
                app.store, upload, app.anon_key, app.rng, SubmissionSource.CLI, app.clock
            )
        except StorageError as exc:
            skipped.append(f"{path.name}: {exc}")
            click.echo(f"warning: skipping {path.name}: {exc}", err=True)
            continue
        session_ids.append(app.orchestrator.start_session(submission.id))

    # mock runs are sequential so one shared script stays deterministic;
    # live runs use bounded concurrency
    if app.config.provider_mode == "mock":
        states = [app.orchestrator.run_session(sid) for sid in session_ids]
    else:
        workers = max(1, min(app.config.batch_concurrency, app.config.concurrent_cap))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            states = list(pool.map(app.orchestrator.run_session, session_ids))

    counts = {RiskLevel.WARNING: 0, RiskLevel.OBSERVATION: 0}
    failed = 0
    for state in states:
        if state.phase is Phase.FAILED:
            failed += 1
            click.echo(f"failed: session {state.session_id}: {state.failure_reason}", err=True)
            continue
        body, _ = app.store.get("report", state.report_id)
        counts[RiskLevel(body["report"]["risk"])] += 1

    summary = f"warning: {counts[RiskLevel.WARNING]}, observation: {counts[RiskLevel.OBSERVATION]}"
    if failed:
        summary += f", failed: {failed}"
    if skipped:
        summary += f", skipped: {len(skipped)}"
    click.echo(summary)
    app.close()
    sys.exit(1 if failed else 0)


@main.command()
@_common_options
@click.option("--json", "as_json", is_flag=True, help="print the machine-readable document")
def stats(as_json: bool, **params):
    """Print classification distribution and the matching-rate table."""
    app = _build_app(params)
    classification = stats_classification(app.store)
    rates = stats_matching_rates(app.store, app.clock)
    if as_json:
        click.echo(canonical_json({"classification": classification, "matching_rates": rates}))
        app.close()
        return

    click.echo("classification distribution")
    click.echo(f"  total reports: {classification['total']}")
    for level in ("warning", "observation"):
        cell = classification[level]
        click.echo(f"  {level:<12} {cell['count']:>5}  {cell['percentage']:>7}%")
    click.echo("")
    click.echo("matching rates (consistency with professional review)")
    header = f"  {'level':<10} {'total':>14} {'warning':>14} {'observation':>14}"
    click.echo(header)
    for level in ("high", "moderate", "low"):
        row = f"  {level:<10}"
        for group in ("total", "warning", "observation"):
            cell = rates[group][level]
            row += f" {cell['count']:>6} {cell['percentage']:>6}%"
        click.echo(row)
    app.close()


@main.command("import-annotations")
@_common_options
@click.argument("csv_path", type=click.Path(path_type=Path, exists=True, dir_okay=False))
def import_annotations(csv_path: Path, **params):
    """Bulk-ingest consistency annotations from a CSV file."""
    app = _build_app(params)
    try:
        accepted, rejected = import_annotations_csv(app.store, csv_path)
    except CsvFormatError as exc:
        click.echo(f"error: {exc}", err=True)
        app.close()
        sys.exit(2)
    click.echo(f"accepted {accepted}, rejected {len(rejected)}")
    for row_no, reason in rejected:
        click.echo(f"  row {row_no}: {reason}", err=True)
    app.close()


@main.command("export-annotations")
@_common_options
@click.argument("csv_path", type=click.Path(path_type=Path))
def export_annotations(csv_path: Path, **params):
    """Write every stored annotation to a CSV file."""
    app = _build_app(params)
    count = export_annotations_csv(app.store, csv_path)
    click.echo(f"exported {count} annotations to {csv_path}")
    app.close()


@main.command()
@_common_options
@click.argument("out_dir", type=click.Path(path_type=Path))
@click.option("--include-images", is_flag=True)
def export(out_dir: Path, include_images: bool, **params):
    """Dump all records as JSON-lines per kind for backup or inspection."""
    app = _build_app(params)
    counts = export_store(app.store, out_dir, include_images=include_images)
    for kind, count in counts.items():
        click.echo(f"{kind}: {count}")
    app.close()


if __name__ == "__main__":
    main()
