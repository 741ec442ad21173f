"""HTTP control API: start, observe, and steer workflows.

Every route reads or writes through one workflow's coordinator; the event
stream endpoint is a cursor over the append-only event log and supports
long-polling. The console (if built) is served as static assets.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from agentflow.agents import NoOutstandingRequestError
from agentflow.backend import ChatBackend, ScriptedBackend
from agentflow.coordinator import (
    Coordinator,
    FeedbackEnvelope,
    FeedbackKind,
    InvalidPhaseError,
    NoSuchWorkflowError,
    TaskAlreadyDoneError,
)
from agentflow.core import EventKind
from agentflow.workflows import EXAMPLES

_FEEDBACK_KINDS = {
    "incidentalobservation": FeedbackKind.INCIDENTAL_OBSERVATION,
    "incidental_observation": FeedbackKind.INCIDENTAL_OBSERVATION,
    "humanproxyresponse": FeedbackKind.HUMAN_PROXY_RESPONSE,
    "human_proxy_response": FeedbackKind.HUMAN_PROXY_RESPONSE,
}


@dataclass
class WorkflowHandle:
    coordinator: Coordinator
    thread: threading.Thread
    config_name: str
    created_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))


class WorkflowRegistry:
    """All workflows this service has started, by id."""

    def __init__(self, base_dir: Path, backend_factory=None):
        self.base_dir = Path(base_dir)
        self.backend_factory = backend_factory or self._scripted_backend
        self._handles: dict[str, WorkflowHandle] = {}
        self._lock = threading.Lock()

    @staticmethod
    def _scripted_backend(config_name: str) -> ChatBackend:
        return ScriptedBackend(EXAMPLES[config_name].build_fixture())

    def start(self, config_name: str, instruction: Optional[str]) -> str:
        if config_name not in EXAMPLES:
            raise KeyError(config_name)
        example = EXAMPLES[config_name]
        workflow_id = uuid.uuid4().hex[:12]
        workdir = self.base_dir / f"{config_name}-{workflow_id}"
        config = example.build_config(workdir)
        backend = self.backend_factory(config_name)
        coordinator = Coordinator(config, backend, workflow_id=workflow_id)
        thread = threading.Thread(
            target=coordinator.run,
            args=(instruction or example.instruction,),
            daemon=True,
        )
        handle = WorkflowHandle(
            coordinator=coordinator, thread=thread, config_name=config_name
        )
        with self._lock:
            self._handles[workflow_id] = handle
        thread.start()
        return workflow_id

    def get(self, workflow_id: str) -> WorkflowHandle:
        with self._lock:
            handle = self._handles.get(workflow_id)
        if handle is None:
            raise NoSuchWorkflowError(workflow_id)
        return handle

    def all_handles(self) -> list[tuple[str, WorkflowHandle]]:
        with self._lock:
            return sorted(self._handles.items(), key=lambda kv: kv[1].created_at)


def describe(workflow_id: str, handle: WorkflowHandle) -> dict[str, Any]:
    coordinator = handle.coordinator
    state = coordinator.state
    units: dict[str, str] = {}
    for event in state.event_log.events():
        if event.kind is EventKind.TASK_STARTED:
            units[event.payload.get("task_id", "")] = event.payload.get("unit", "")
    tasks = []
    if state.queue is not None:
        for tid in sorted(state.queue.tasks):
            task = state.queue.tasks[tid]
            tasks.append(
                {
                    "id": task.id,
                    "description": task.description,
                    "status": task.status.value,
                    "depends_on": sorted(task.depends_on),
                    "unit": units.get(task.id),
                }
            )
    return {
        "workflow_id": workflow_id,
        "config_name": handle.config_name,
        "instruction": state.instruction,
        "phase": state.phase.value,
        "verdict": state.verdict,
        "final_result": state.final_result,
        "replan_count": state.replan_count,
        "tasks": tasks,
        "outstanding_requests": [
            {"task_id": tid, "prompt": prompt}
            for tid, prompt in sorted(coordinator.feedback.outstanding().items())
        ],
        "created_at": handle.created_at.isoformat(),
        "events_url": f"/workflows/{workflow_id}/events",
        "event_count": len(state.event_log),
    }


class StartRequest(BaseModel):
    config_name: str
    instruction: Optional[str] = None


class FeedbackRequest(BaseModel):
    kind: str
    content: str
    task_id: Optional[str] = None


def create_app(
    base_dir: str | Path,
    backend_factory=None,
    static_dir: Optional[str] = None,
) -> FastAPI:
    app = FastAPI(title="agentflow service")
    registry = WorkflowRegistry(Path(base_dir), backend_factory=backend_factory)
    app.state.registry = registry

    @app.get("/configs")
    def list_configs() -> list[dict[str, str]]:
        return [
            {"name": name, "instruction": example.instruction}
            for name, example in EXAMPLES.items()
        ]

    @app.get("/workflows")
    def list_workflows() -> list[dict[str, Any]]:
        return [describe(wid, handle) for wid, handle in registry.all_handles()]

    @app.post("/workflows", status_code=201)
    def start_workflow(request: StartRequest) -> dict[str, str]:
        try:
            workflow_id = registry.start(request.config_name, request.instruction)
        except KeyError:
            raise HTTPException(400, f"unknown config {request.config_name!r}")
        return {"workflow_id": workflow_id}

    @app.get("/workflows/{workflow_id}")
    def get_workflow(workflow_id: str) -> dict[str, Any]:
        try:
            handle = registry.get(workflow_id)
        except NoSuchWorkflowError:
            raise HTTPException(404, "unknown workflow")
        return describe(workflow_id, handle)

    @app.get("/workflows/{workflow_id}/events")
    def get_events(
        workflow_id: str,
        from_seq: int = Query(0, alias="from"),
        wait: float = 0.0,
    ) -> list[dict]:
        try:
            handle = registry.get(workflow_id)
        except NoSuchWorkflowError:
            raise HTTPException(404, "unknown workflow")
        log = handle.coordinator.state.event_log
        if wait > 0:
            events = log.wait_for(from_seq, timeout=min(wait, 30.0))
        else:
            events = log.events(from_seq)
        return [e.to_dict() for e in events]

    @app.post("/workflows/{workflow_id}/feedback", status_code=202)
    def post_feedback(workflow_id: str, request: FeedbackRequest) -> dict[str, str]:
        try:
            handle = registry.get(workflow_id)
        except NoSuchWorkflowError:
            raise HTTPException(404, "unknown workflow")
        kind = _FEEDBACK_KINDS.get(request.kind.lower())
        if kind is None:
            raise HTTPException(400, f"unknown feedback kind {request.kind!r}")
        envelope = FeedbackEnvelope(
            workflow_id=workflow_id,
            kind=kind,
            content=request.content,
            task_id=request.task_id,
        )
        try:
            handle.coordinator.inject_feedback(envelope)
        except NoOutstandingRequestError:
            raise HTTPException(409, "no outstanding human request for that task")
        except TaskAlreadyDoneError:
            raise HTTPException(409, "task already finished; feedback dropped")
        except (NoSuchWorkflowError, ValueError) as exc:
            raise HTTPException(404, str(exc))
        return {"status": "accepted"}

    @app.post("/workflows/{workflow_id}/pause")
    def pause_workflow(workflow_id: str) -> dict[str, str]:
        try:
            handle = registry.get(workflow_id)
        except NoSuchWorkflowError:
            raise HTTPException(404, "unknown workflow")
        try:
            handle.coordinator.pause()
        except InvalidPhaseError as exc:
            raise HTTPException(409, str(exc))
        return {"phase": handle.coordinator.state.phase.value}

    @app.post("/workflows/{workflow_id}/resume")
    def resume_workflow(workflow_id: str) -> dict[str, str]:
        try:
            handle = registry.get(workflow_id)
        except NoSuchWorkflowError:
            raise HTTPException(404, "unknown workflow")
        try:
            handle.coordinator.unpause()
        except InvalidPhaseError as exc:
            raise HTTPException(409, str(exc))
        return {"phase": handle.coordinator.state.phase.value}

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")

    return app
