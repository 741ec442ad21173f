"""Command-line entry points.

``run`` executes a named workflow offline (scripted by default) or
against an HTTP endpoint; ``resume`` continues from a snapshot; ``serve``
hosts the control API and console; ``inspect`` summarizes a snapshot;
``ingest`` builds a semantic-search index from a document directory.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from agentflow.backend import HttpBackend, HttpBackendConfig, ScriptedBackend
from agentflow.coordinator import (
    Coordinator,
    WorkflowError,
    resume as resume_workflow_from,
)
from agentflow.core import Phase
from agentflow.toolkits import CorpusIndex
from agentflow.workflows import EXAMPLES


def _build_backend(spec: str, config_name: str):
    if spec == "scripted":
        return ScriptedBackend(EXAMPLES[config_name].build_fixture())
    if spec.startswith("scripted:"):
        return ScriptedBackend.from_jsonl(spec.split(":", 1)[1])
    if spec.startswith("http:"):
        rest = spec.split(":", 1)[1]
        base_url, _, model = rest.partition(",")
        return HttpBackend(
            HttpBackendConfig(
                base_url=base_url or "http://localhost:8000/v1",
                model=model or "default",
                auth_env_var="AGENTFLOW_API_TOKEN",
            )
        )
    raise click.BadParameter(f"unknown backend spec {spec!r}")


@click.group()
def main() -> None:
    """Multi-agent workflow engine."""


@main.command()
@click.argument("config_name", type=click.Choice(sorted(EXAMPLES)))
@click.option("--instruction", default=None, help="Override the example instruction.")
@click.option(
    "--backend",
    "backend_spec",
    default="scripted",
    help="scripted | scripted:<fixture.jsonl> | http:<base_url>,<model>",
)
@click.option(
    "--base-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("./agentflow-runs"),
    show_default=True,
    help="Working directory for corpus, workspace, and snapshots.",
)
@click.option("--workflow-id", default=None, help="Fixed workflow id (snapshots reuse it).")
def run(config_name: str, instruction: str | None, backend_spec: str, base_dir: Path, workflow_id: str | None) -> None:
    """Run a named workflow to completion and print result + verdict."""
    example = EXAMPLES[config_name]
    workdir = base_dir / config_name
    try:
        config = example.build_config(workdir)
        backend = _build_backend(backend_spec, config_name)
    except (OSError, KeyError) as exc:
        raise click.ClickException(f"could not prepare {config_name}: {exc}")
    coordinator = Coordinator(config, backend, workflow_id=workflow_id)
    state = coordinator.run(instruction or example.instruction)
    if config_name == "actor-critic" and state.final_result:
        out = workdir / "workspace"
        out.mkdir(parents=True, exist_ok=True)
        (out / "edited_document.txt").write_text(state.final_result, encoding="utf-8")
    click.echo(f"phase: {state.phase.value}")
    click.echo(f"verdict: {state.verdict}")
    click.echo("result:")
    click.echo(state.final_result or "(none)")
    if state.phase is not Phase.DONE:
        sys.exit(1)


@main.command()
@click.argument("snapshot", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_name", required=True, type=click.Choice(sorted(EXAMPLES)))
@click.option(
    "--base-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("./agentflow-runs"),
    show_default=True,
)
@click.option("--backend", "backend_spec", default="scripted")
def resume(snapshot: str, config_name: str, base_dir: Path, backend_spec: str) -> None:
    """Resume a workflow from a snapshot file."""
    example = EXAMPLES[config_name]
    config = example.build_config(base_dir / config_name)
    backend = _build_backend(backend_spec, config_name)
    try:
        state = resume_workflow_from(snapshot, config, backend)
    except WorkflowError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"phase: {state.phase.value}")
    click.echo(f"verdict: {state.verdict}")
    click.echo("result:")
    click.echo(state.final_result or "(none)")
    if state.phase is not Phase.DONE:
        sys.exit(1)


@main.command()
@click.option("--port", default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option(
    "--base-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("./agentflow-runs"),
    show_default=True,
)
@click.option("--static-dir", default=None, help="Console assets to serve at /.")
def serve(port: int, host: str, base_dir: Path, static_dir: str | None) -> None:
    """Host the HTTP control API (and the console, if built)."""
    import uvicorn

    from agentflow.service import create_app

    app = create_app(base_dir, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
def inspect(path: str) -> None:
    """Summarize a snapshot (or event-log) file."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict) and "state" in data:
        state = data["state"]
        click.echo(f"workflow: {state['workflow_id']}")
        click.echo(f"phase: {state['phase']}")
        click.echo(f"replan_count: {state['replan_count']}")
        tasks = (state.get("queue") or {}).get("tasks", [])
        for task in tasks:
            click.echo(f"  task {task['id']}: {task['status']}")
        click.echo(f"events: {len(state.get('events', []))}")
    elif isinstance(data, list):
        click.echo(f"events: {len(data)}")
        for event in data[-10:]:
            click.echo(f"  {event['sequence_no']:4d} {event['kind']}")
    else:
        raise click.ClickException("not a snapshot or event-log file")


@main.command()
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--output", default="corpus-index.jsonl", show_default=True)
def ingest(corpus_dir: str, output: str) -> None:
    """Build the semantic-search index for a document directory."""
    index = CorpusIndex.ingest(corpus_dir)
    index.save(output)
    click.echo(f"indexed {len(index.passages)} passages into {output}")


if __name__ == "__main__":
    main()
