"""Workflow coordination: plan, execute, verify, replan, snapshot, resume.

The coordinator owns all state transitions for one workflow. Planning
produces a task DAG (or adopts a predefined plan); execution releases
dependency-satisfied tasks and drives them through matched agent units;
verification judges only the instruction and the final result, and a
false verdict triggers replanning up to the configured budget. Snapshots
are written at every task boundary and are sufficient to resume a run
without repeating completed tasks.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Optional

from agentflow.agents import (
    AgentSpec,
    AgentUnit,
    ExecutionServices,
    Executor,
    FeedbackHub,
    TaskExecutionError,
    match_unit,
)
from agentflow.backend import ChatBackend, embed, prompt_hash
from agentflow.core import (
    EventKind,
    Phase,
    SchedulerError,
    Task,
    TaskQueue,
    TaskStatus,
    WorkflowState,
    build_queue,
)
from agentflow.memory import Episode, EpisodeStore
from agentflow.prompts import (
    DEFAULT_TERMINATION,
    PLANNER_TEMPLATE,
    VERIFIER_TEMPLATE,
    PromptError,
    parse_plan,
    parse_verdict_detail,
    render_system,
    run_basic,
    UnparseableVerdictError,
)

logger = logging.getLogger(__name__)

SNAPSHOT_SCHEMA_VERSION = 1


class WorkflowError(Exception):
    pass


class WorkflowFailedError(WorkflowError):
    def __init__(self, phase: Phase, cause: str):
        self.phase = phase
        self.cause = cause
        super().__init__(f"workflow failed during {phase.value}: {cause}")


class NoSuchWorkflowError(WorkflowError):
    pass


class TaskAlreadyDoneError(WorkflowError):
    pass


class InvalidPhaseError(WorkflowError):
    pass


class SchemaVersionMismatchError(WorkflowError):
    pass


class ConfigFingerprintMismatchError(WorkflowError):
    pass


class FeedbackKind(str, Enum):
    INCIDENTAL_OBSERVATION = "incidental_observation"
    HUMAN_PROXY_RESPONSE = "human_proxy_response"


@dataclass
class FeedbackEnvelope:
    workflow_id: str
    kind: FeedbackKind
    content: str
    task_id: Optional[str] = None


@dataclass
class WorkflowConfig:
    """Declarative description of one workflow."""

    name: str
    verifier: AgentSpec
    units: list[AgentUnit]
    planner: Optional[AgentSpec] = None
    predefined_plan: Optional[list[dict[str, Any]]] = None
    max_replans: int = 2
    termination_literal: str = DEFAULT_TERMINATION
    episodic_store_path: Optional[str] = None
    snapshot_dir: Optional[str] = None
    max_workers: int = 1
    human_timeout: Optional[float] = None
    retrieval_k: int = 3

    def __post_init__(self) -> None:
        if self.planner is None and self.predefined_plan is None:
            raise ValueError("config needs a planner or a predefined plan")
        if self.planner is not None and self.planner.strategy is not None:
            raise ValueError("the planner must use a non-iterative strategy")
        if self.verifier.strategy is not None:
            raise ValueError("the verifier must use a non-iterative strategy")
        if self.predefined_plan is not None:
            build_queue([dict(spec) for spec in self.predefined_plan])


def config_fingerprint(config: WorkflowConfig) -> str:
    """Stable hash of the structural parts of a config."""

    def agent_dict(agent: AgentSpec) -> dict[str, Any]:
        return {
            "name": agent.name,
            "persona": agent.persona,
            "stages": list(agent.strategy.stages) if agent.strategy else None,
            "tools": agent.toolbox.names(),
            "refiner": [agent.refiner.kind.value, agent.refiner.k, agent.refiner.min_similarity],
            "may_terminate": agent.may_terminate,
            "is_lead": agent.is_lead,
        }

    payload = {
        "name": config.name,
        "planner": agent_dict(config.planner) if config.planner else None,
        "verifier": agent_dict(config.verifier),
        "units": [
            {
                "name": unit.name,
                "topology": unit.topology.value,
                "matcher": unit.matcher.kind.value,
                "sequence": unit.sequence,
                "max_iterations": unit.max_iterations,
                "agents": [agent_dict(a) for a in unit.agents],
            }
            for unit in config.units
        ],
        "max_replans": config.max_replans,
        "termination_literal": config.termination_literal,
        "predefined_plan": config.predefined_plan,
    }
    canonical = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Coordinator:
    """Single owner of one workflow's state and transitions."""

    def __init__(
        self,
        config: WorkflowConfig,
        backend: ChatBackend,
        workflow_id: Optional[str] = None,
        embedder=embed,
    ):
        self.config = config
        self.backend = backend
        self.embedder = embedder
        self.state = WorkflowState(
            workflow_id=workflow_id or uuid.uuid4().hex[:12],
            instruction="",
        )
        self.feedback = FeedbackHub(human_timeout=config.human_timeout)
        self.episode_store = EpisodeStore(path=config.episodic_store_path, embedder=embedder)
        self._lock = threading.RLock()
        self._unpaused = threading.Event()
        self._unpaused.set()
        self._released: set[str] = set()
        self._snapshot_counter = 0
        # route every chat call into the event log as a hashed model-call event
        if hasattr(backend, "observer"):
            backend.observer = self._on_model_call
        self.services = ExecutionServices(
            backend=backend,
            embedder=embedder,
            episode_store=self.episode_store,
            event_log=self.state.event_log,
            feedback=self.feedback,
            workflow_id=self.state.workflow_id,
            termination_literal=config.termination_literal,
            retrieval_k=config.retrieval_k,
        )
        self.executor = Executor(self.services)

    def _on_model_call(self, prompt: str, response: str) -> None:
        self.state.event_log.append(
            EventKind.MODEL_CALL,
            {"prompt_hash": prompt_hash(prompt), "response_hash": prompt_hash(response)},
        )

    # -- planning ------------------------------------------------------------

    def plan(self, instruction: str, retry_context: Optional[tuple[str, str]] = None) -> TaskQueue:
        """Produce the task queue, via the planner or the predefined plan.

        ``retry_context`` is (failed_result, verifier_reason) when replanning.
        """
        if self.config.predefined_plan is not None:
            specs = [dict(spec) for spec in self.config.predefined_plan]
            queue = build_queue(specs)
            self._emit_plan(specs)
            return queue
        system = render_system(
            PLANNER_TEMPLATE,
            persona=self.config.planner.persona,
            objective="Decompose the instruction into a task DAG.",
        )
        prompt = f"Decompose this instruction into tasks:\n{instruction}"
        if retry_context is not None:
            failed_result, reason = retry_context
            prompt += (
                "\n\nA previous attempt produced this result:\n"
                f"{failed_result}\n\n"
                f"It was rejected because: {reason}\n"
                "Produce an improved plan."
            )
        attempt_prompt = prompt
        for attempt in range(2):
            raw = run_basic(
                system,
                attempt_prompt,
                self.backend,
                temperature=self.config.planner.temperature,
            )
            try:
                specs = parse_plan(raw)
                queue = build_queue(specs)
            except (PromptError, SchedulerError, ValueError) as exc:
                if attempt == 0:
                    attempt_prompt = (
                        prompt + f"\n\nThe previous plan was invalid: {exc}. "
                        "Respond with a corrected JSON plan."
                    )
                    continue
                raise WorkflowFailedError(Phase.PLANNING, str(exc)) from exc
            self._emit_plan(specs)
            return queue
        raise AssertionError("unreachable")

    def _emit_plan(self, specs: list[dict[str, Any]]) -> None:
        self.state.event_log.append(
            EventKind.PLAN_CREATED,
            {
                "tasks": [
                    {
                        "id": s["id"],
                        "description": s["description"],
                        "depends_on": sorted(s.get("depends_on", [])),
                        "unit_hint": s.get("unit_hint"),
                    }
                    for s in specs
                ]
            },
        )

    # -- verification ----------------------------------------------------------

    def verify(self, instruction: str, final_result: str) -> tuple[bool, str]:
        """Verdict from instruction + final result only (no plan, no partials)."""
        system = render_system(
            VERIFIER_TEMPLATE,
            persona=self.config.verifier.persona,
            objective="Judge whether the result satisfies the instruction.",
        )
        prompt = f"Instruction:\n{instruction}\n\nFinal result:\n{final_result}"
        raw = run_basic(
            system, prompt, self.backend, temperature=self.config.verifier.temperature
        )
        try:
            verdict, reason = parse_verdict_detail(raw)
        except UnparseableVerdictError:
            logger.warning("unparseable verdict treated as false: %r", raw[:200])
            verdict, reason = False, "unparseable verifier output"
        self.state.event_log.append(
            EventKind.VERDICT_ISSUED, {"verdict": verdict, "reason": reason}
        )
        return verdict, reason

    # -- execution ----------------------------------------------------------------

    def run(self, instruction: str) -> WorkflowState:
        """Full plan-execute-verify loop, replanning within budget."""
        self.state.instruction = instruction
        self.state.phase = Phase.PLANNING
        try:
            queue = self.plan(instruction)
        except WorkflowFailedError:
            self.state.phase = Phase.FAILED
            return self.state
        self.state.queue = queue
        return self._run_from_queue()

    def _run_from_queue(self) -> WorkflowState:
        retry_context: Optional[tuple[str, str]] = None
        while True:
            self.state.phase = Phase.EXECUTING
            completed = self._execute_all(self.state.queue)
            if completed:
                final = self._assemble_final(self.state.queue)
                self.state.phase = Phase.VERIFYING
                verdict, reason = self.verify(self.state.instruction, final)
                self.state.verdict = verdict
                if verdict:
                    self.state.final_result = final
                    self.state.verdict = True
                    self.state.phase = Phase.DONE
                    self._auto_snapshot()
                    return self.state
                retry_context = (final, reason)
            else:
                failures = [
                    t for t in self.state.queue.tasks.values() if t.status is TaskStatus.FAILED
                ]
                cause = "; ".join(f"{t.id}: {t.result}" for t in failures) or "no runnable tasks"
                retry_context = ("(execution failed before a result was produced)", cause)
                self.state.verdict = None
            if self.state.replan_count >= self.config.max_replans:
                if completed:
                    self.state.verdict = False
                self.state.phase = Phase.FAILED
                self._auto_snapshot()
                return self.state
            self.state.replan_count += 1
            self.state.phase = Phase.REPLANNING
            try:
                queue = self.plan(self.state.instruction, retry_context=retry_context)
            except WorkflowFailedError:
                self.state.phase = Phase.FAILED
                return self.state
            self.state.queue = queue
            self._released = set()

    def _execute_all(self, queue: TaskQueue) -> bool:
        """Release and run tasks until done or a failure halts releases."""
        while True:
            self._unpaused.wait()
            with self._lock:
                ready = queue.ready_tasks()
                for task in ready:
                    if task.id not in self._released:
                        self._released.add(task.id)
                        self.state.event_log.append(
                            EventKind.TASK_RELEASED, {"task_id": task.id}
                        )
            if not ready:
                if queue.all_done():
                    return True
                return False
            if self.config.max_workers <= 1:
                for task in ready:
                    self._run_one(queue, task)
                    if queue.has_failure():
                        return False
            else:
                with ThreadPoolExecutor(max_workers=self.config.max_workers) as pool:
                    list(pool.map(lambda t: self._run_one(queue, t), ready))
                if queue.has_failure():
                    return False

    def _run_one(self, queue: TaskQueue, task: Task) -> None:
        with self._lock:
            queue.start_task(task.id)
            unit = match_unit(self.config.units, task, self.embedder)
            self.state.event_log.append(
                EventKind.TASK_STARTED, {"task_id": task.id, "unit": unit.name}
            )
            work_item = Task.from_dict(task.to_dict())  # executor gets a copy
        try:
            result, _trace = self.executor.execute_task(unit, work_item)
        except TaskExecutionError as exc:
            with self._lock:
                queue.fail_task(task.id, str(exc))
                self.state.event_log.append(
                    EventKind.TASK_FAILED, {"task_id": task.id, "reason": str(exc)}
                )
            return
        with self._lock:
            queue.complete_task(task.id, result)
            self.state.event_log.append(
                EventKind.TASK_COMPLETED, {"task_id": task.id, "result": result}
            )
            self._auto_snapshot()

    def _assemble_final(self, queue: TaskQueue) -> str:
        """Sink task's result; several sinks concatenate in topological order."""
        sinks = [tid for tid in queue.sink_ids() if queue.tasks[tid].status is TaskStatus.DONE]
        if not sinks:
            return ""
        if len(sinks) == 1:
            return queue.tasks[sinks[0]].result or ""
        return "\n\n".join(f"## {tid}\n{queue.tasks[tid].result or ''}" for tid in sinks)

    # -- pause / feedback -----------------------------------------------------------

    def pause(self) -> None:
        with self._lock:
            if self.state.phase is not Phase.EXECUTING:
                raise InvalidPhaseError(f"cannot pause from {self.state.phase.value}")
            self.state.phase = Phase.PAUSED
            self._unpaused.clear()

    def unpause(self) -> None:
        with self._lock:
            if self.state.phase is not Phase.PAUSED:
                raise InvalidPhaseError(f"cannot resume from {self.state.phase.value}")
            self.state.phase = Phase.EXECUTING
            self._unpaused.set()

    def inject_feedback(self, envelope: FeedbackEnvelope) -> None:
        """Deliver human feedback into the running workflow."""
        if envelope.kind is FeedbackKind.HUMAN_PROXY_RESPONSE:
            if envelope.task_id is None:
                raise ValueError("human proxy response needs a task_id")
            self.feedback.respond_human(envelope.task_id, envelope.content)
            self.state.event_log.append(
                EventKind.FEEDBACK_INJECTED,
                {
                    "task_id": envelope.task_id,
                    "kind": envelope.kind.value,
                    "content": envelope.content,
                },
            )
            return
        if envelope.task_id is None:
            raise ValueError("incidental feedback needs a task_id")
        queue = self.state.queue
        task = queue.tasks.get(envelope.task_id) if queue else None
        if task is None:
            raise NoSuchWorkflowError(f"unknown task {envelope.task_id!r}")
        if task.status in (TaskStatus.DONE, TaskStatus.FAILED):
            logger.warning(
                "dropping incidental feedback for finished task %s", envelope.task_id
            )
            raise TaskAlreadyDoneError(envelope.task_id)
        self.feedback.put_incidental(envelope.task_id, envelope.content)
        self.state.event_log.append(
            EventKind.FEEDBACK_INJECTED,
            {
                "task_id": envelope.task_id,
                "kind": envelope.kind.value,
                "content": envelope.content,
            },
        )

    # -- snapshot / resume -------------------------------------------------------------

    def snapshot_dict(self) -> dict[str, Any]:
        backend_state = self.backend.state() if hasattr(self.backend, "state") else None
        data: dict[str, Any] = {
            "schema_version": SNAPSHOT_SCHEMA_VERSION,
            "config_fingerprint": config_fingerprint(self.config),
            "state": self.state.to_dict(),
            "backend_state": backend_state,
            "running_transcripts": {},
        }
        if self.config.episodic_store_path is None:
            data["episodes"] = [e.to_dict() for e in self.episode_store.episodes()]
        else:
            data["episode_count"] = len(self.episode_store)
        return data

    def snapshot(self, path: Optional[str] = None) -> dict[str, Any]:
        """Capture the workflow; optionally write it to ``path``."""
        with self._lock:
            self.state.event_log.append(
                EventKind.SNAPSHOT, {"sequence": self._snapshot_counter}
            )
            data = self.snapshot_dict()
            self._snapshot_counter += 1
        if path:
            Path(path).write_text(json.dumps(data), encoding="utf-8")
        return data

    def _auto_snapshot(self) -> None:
        if self.config.snapshot_dir is None:
            return
        directory = Path(self.config.snapshot_dir)
        directory.mkdir(parents=True, exist_ok=True)
        name = f"{self.state.workflow_id}.{self._snapshot_counter:03d}.json"
        data = self.snapshot(str(directory / name))
        (directory / f"{self.state.workflow_id}.latest.json").write_text(
            json.dumps(data), encoding="utf-8"
        )


def run_workflow(
    instruction: str,
    config: WorkflowConfig,
    backend: ChatBackend,
    workflow_id: Optional[str] = None,
) -> WorkflowState:
    return Coordinator(config, backend, workflow_id=workflow_id).run(instruction)


def resume(
    snapshot_file: str,
    config: WorkflowConfig,
    backend: ChatBackend,
) -> WorkflowState:
    """Rebuild a workflow from a snapshot and run it to completion.

    Done tasks are never re-executed; tasks that were running restart from
    their beginning. Refuses to resume under a changed config or an
    unknown snapshot schema.
    """
    coordinator = resume_coordinator(snapshot_file, config, backend)
    if coordinator.state.phase in (Phase.DONE, Phase.FAILED):
        return coordinator.state
    return coordinator._run_from_queue()


def resume_coordinator(
    snapshot_file: str,
    config: WorkflowConfig,
    backend: ChatBackend,
) -> Coordinator:
    data = json.loads(Path(snapshot_file).read_text(encoding="utf-8"))
    if data.get("schema_version") != SNAPSHOT_SCHEMA_VERSION:
        raise SchemaVersionMismatchError(
            f"snapshot schema {data.get('schema_version')} != {SNAPSHOT_SCHEMA_VERSION}"
        )
    if data.get("config_fingerprint") != config_fingerprint(config):
        raise ConfigFingerprintMismatchError(
            "snapshot was taken under a different workflow config"
        )
    state = WorkflowState.from_dict(data["state"])
    coordinator = Coordinator(config, backend, workflow_id=state.workflow_id)
    coordinator.state = state
    coordinator.services.event_log = state.event_log
    coordinator.executor = Executor(coordinator.services)
    coordinator._snapshot_counter = sum(
        1 for e in state.event_log.events() if e.kind is EventKind.SNAPSHOT
    )
    if data.get("backend_state") and hasattr(backend, "restore"):
        backend.restore(data["backend_state"])
    if config.episodic_store_path is None:
        for episode_data in data.get("episodes", []):
            coordinator.episode_store.store(Episode.from_dict(episode_data))
    elif data.get("episode_count") is not None:
        # consistent prefix: drop episodes appended after the snapshot
        coordinator.episode_store.truncate(data["episode_count"])
    if state.phase in (Phase.DONE, Phase.FAILED):
        return coordinator
    queue = state.queue
    if queue is not None:
        for task in queue.tasks.values():
            if task.status is TaskStatus.RUNNING:
                # running-at-snapshot tasks restart from their beginning
                task.status = TaskStatus.PENDING
                task.dependency_results = {
                    dep: queue.tasks[dep].result
                    for dep in task.depends_on
                    if queue.tasks[dep].status is TaskStatus.DONE
                }
            if task.status is not TaskStatus.PENDING:
                coordinator._released.add(task.id)
        queue.ready_tasks()
    state.event_log.append(EventKind.RESUMED, {"workflow_id": state.workflow_id})
    return coordinator
