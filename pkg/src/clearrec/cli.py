"""Command-line interface."""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from .audit import SyntheticShopSpec, Thresholds, build_reference_system, run_audit
from .errors import ClearRecError, NoPriceDataError, RuleCompileError
from .events import _iso_to_ts
from .rules import compile_rules
from .service import RecommenderService, ServiceConfig
from .transparency import lowest_price_reference, price_points_from_jsonl


@click.group()
def main():
    """Transparency-first recommendation engine."""


def _service(config_path: str) -> RecommenderService:
    return RecommenderService(ServiceConfig.from_json(config_path))


@main.command()
@click.argument("events_file", type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--lenient", is_flag=True, help="Ignore unknown event fields instead of rejecting them.")
def ingest(events_file, config_path, lenient):
    """Ingest a JSONL event file into the configured event log."""
    service = _service(config_path)
    now = int(time.time())
    count = 0
    for lineno, line in enumerate(Path(events_file).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            service.ingest_line(line, strict=not lenient, now=now)
            count += 1
        except (ClearRecError, ValueError) as exc:
            raise click.ClickException(f"line {lineno}: {exc}")
    click.echo(f"ingested {count} event(s)")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--as-of", default=None, help="Training cut-off, ISO-8601 (defaults to newest event).")
def train(config_path, as_of):
    """Retrain the indicator model and persist it."""
    service = _service(config_path)
    as_of_ts = _iso_to_ts(as_of) if as_of else None
    model = service.retrain(as_of=as_of_ts)
    click.echo(
        f"trained model: {len(model.indicators)} target(s), "
        f"config_hash={model.config_hash}, written to {service.config.model_path}"
    )


def _recommend(config_path, user, frame, context_kv):
    service = _service(config_path)
    context = dict(kv.split("=", 1) for kv in context_kv)
    return service.recommend(frame, user, context)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--user", required=True)
@click.option("--frame", required=True)
@click.option("--context", "context_kv", multiple=True, help="Context entries as key=value.")
def recommend(config_path, user, frame, context_kv):
    """Serve one frame and print the items with their disclosure (JSON)."""
    try:
        result = _recommend(config_path, user, frame, context_kv)
    except ClearRecError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps(
        {
            "frame_id": result.frame_id,
            "items": [
                {"item_id": i.item_id, "score": i.score, "sponsored": i.sponsored}
                for i in result.items
            ],
            "disclosure": json.loads(result.disclosure.to_json()),
        },
        indent=2,
        sort_keys=True,
    ))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--user", required=True)
@click.option("--frame", required=True)
@click.option("--context", "context_kv", multiple=True)
def explain(config_path, user, frame, context_kv):
    """Serve one frame and print the human-readable criteria explanation."""
    try:
        result = _recommend(config_path, user, frame, context_kv)
    except ClearRecError as exc:
        raise click.ClickException(str(exc))
    click.echo(result.disclosure.render_text())


@main.group()
def rules():
    """Business-rule tooling."""


@rules.command("check")
@click.argument("rules_file", type=click.Path(exists=True))
def rules_check(rules_file):
    """Validate a rule definitions file."""
    try:
        ruleset = compile_rules(Path(rules_file).read_text())
    except (RuleCompileError, json.JSONDecodeError, KeyError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"ok: {len(ruleset)} rule(s)")


@main.command()
@click.argument("item_id")
@click.option("--prices", "prices_file", required=True, type=click.Path(exists=True))
@click.option("--at", "at_iso", required=True, help="Reference instant, ISO-8601.")
@click.option("--window-days", default=180, show_default=True)
def pricecheck(item_id, prices_file, at_iso, window_days):
    """Report the lowest in-window price for an item (reference price)."""
    points = [p for p in price_points_from_jsonl(Path(prices_file).read_text()) if p.item_id == item_id]
    try:
        price = lowest_price_reference(points, now=_iso_to_ts(at_iso), window_days=window_days)
    except NoPriceDataError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"{item_id}: lowest price in the last {window_days} days = {price:.2f}")


@main.group()
def audit():
    """Ethical audit benchmark."""


@audit.command("run")
@click.option("--spec", "spec_file", required=True, type=click.Path(exists=True))
@click.option("--thresholds", "thresholds_file", default=None, type=click.Path(exists=True))
@click.option("--out", "out_file", default=None, type=click.Path())
def audit_run(spec_file, thresholds_file, out_file):
    """Run the benchmark; exits nonzero when any check fails."""
    spec_doc = json.loads(Path(spec_file).read_text())
    spec = SyntheticShopSpec.from_dict(spec_doc)
    protective = spec_doc.get("protective_rules", True)
    thresholds = None
    if thresholds_file:
        thresholds = Thresholds.from_dict(json.loads(Path(thresholds_file).read_text()))

    def factory(shop):
        return build_reference_system(shop, protective_rules=protective)

    report = run_audit(factory, spec, thresholds)
    if out_file:
        Path(out_file).write_text(report.to_json())
    click.echo(report.summary())
    if not report.overall_pass:
        click.echo("failing checks: " + ", ".join(report.failing_checks()))
        sys.exit(1)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def serve(config_path):
    """Run the HTTP API."""
    import uvicorn

    from .service import create_app

    service = _service(config_path)
    click.echo(f"config_hash={service.config.config_hash()}")
    host, _, port = service.config.listen_addr.partition(":")
    uvicorn.run(create_app(service), host=host or "127.0.0.1", port=int(port or 8080))


if __name__ == "__main__":
    main()
