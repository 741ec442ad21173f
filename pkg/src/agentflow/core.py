"""Domain types and the dependency-resolving task queue.

Everything downstream (prompt strategies, agent units, the coordinator)
builds on the types in this module: conversation messages, tasks organized
as a DAG, the append-only workflow event log, and the overall workflow
state object that snapshots serialize.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from heapq import heapify, heappop, heappush
from typing import Any, Iterable, Optional


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


class Origin(str, Enum):
    MODEL = "model"
    TOOL_RESULT = "tool_result"
    HUMAN = "human"
    FRAMEWORK = "framework"


@dataclass
class Message:
    """One role-tagged entry in a conversation.

    ``stage_tags`` lists the stage labels (Thought, Action, ...) parsed out
    of an assistant response by an iterative strategy; they are only legal
    on assistant messages.
    """

    role: Role
    content: str
    stage_tags: Optional[list[str]] = None
    origin: Origin = Origin.FRAMEWORK

    def __post_init__(self) -> None:
        if not self.content or not self.content.strip():
            raise ValueError("message content must be non-empty")
        if self.stage_tags and self.role is not Role.ASSISTANT:
            raise ValueError("stage_tags are only valid on assistant messages")

    def to_dict(self) -> dict[str, Any]:
        return {
            "role": self.role.value,
            "content": self.content,
            "stage_tags": list(self.stage_tags) if self.stage_tags else None,
            "origin": self.origin.value,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Message":
        return cls(
            role=Role(data["role"]),
            content=data["content"],
            stage_tags=data.get("stage_tags"),
            origin=Origin(data.get("origin", "framework")),
        )


class TaskStatus(str, Enum):
    PENDING = "pending"
    READY = "ready"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


class SchedulerError(Exception):
    """Base class for task-queue construction and transition errors."""


class DuplicateIdError(SchedulerError):
    pass


class UnknownDependencyError(SchedulerError):
    pass


class CycleDetectedError(SchedulerError):
    def __init__(self, cycle: list[str]):
        self.cycle = list(cycle)
        super().__init__("dependency cycle: " + " -> ".join(self.cycle))


class UnknownTaskError(SchedulerError):
    pass


class InvalidTransitionError(SchedulerError):
    pass


@dataclass
class Task:
    """A node of the plan DAG.

    ``dependency_results`` is filled in by the queue as direct dependencies
    complete; its keys are always a subset of ``depends_on``.
    """

    id: str
    description: str
    depends_on: set[str] = field(default_factory=set)
    status: TaskStatus = TaskStatus.PENDING
    result: Optional[str] = None
    dependency_results: dict[str, str] = field(default_factory=dict)
    unit_hint: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "description": self.description,
            "depends_on": sorted(self.depends_on),
            "status": self.status.value,
            "result": self.result,
            "dependency_results": dict(self.dependency_results),
            "unit_hint": self.unit_hint,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Task":
        return cls(
            id=data["id"],
            description=data["description"],
            depends_on=set(data.get("depends_on", [])),
            status=TaskStatus(data.get("status", "pending")),
            result=data.get("result"),
            dependency_results=dict(data.get("dependency_results", {})),
            unit_hint=data.get("unit_hint"),
        )


class TaskQueue:
    """DAG-aware container releasing tasks as their dependencies resolve.

    Mutations are expected to be serialized by a single owner (the
    coordinator); the queue itself holds no lock.
    """

    def __init__(self, tasks: Iterable[Task]):
        self.tasks: dict[str, Task] = {}
        for task in tasks:
            if task.id in self.tasks:
                raise DuplicateIdError(f"duplicate task id {task.id!r}")
            self.tasks[task.id] = task
        self.dependents: dict[str, set[str]] = {tid: set() for tid in self.tasks}
        for task in self.tasks.values():
            for dep in task.depends_on:
                if dep not in self.tasks:
                    raise UnknownDependencyError(
                        f"task {task.id!r} depends on unknown task {dep!r}"
                    )
                self.dependents[dep].add(task.id)
        self._assert_acyclic()

    def _assert_acyclic(self) -> None:
        order = _kahn_order(self.tasks)
        if len(order) != len(self.tasks):
            raise CycleDetectedError(_find_cycle(self.tasks))

    # -- queries -----------------------------------------------------------

    def ready_tasks(self) -> list[Task]:
        """Release every pending task whose dependencies are all done.

        Marks releasable tasks Ready and returns the full Ready antichain
        in id order, so callers can run all of them concurrently.
        """
        for task in self.tasks.values():
            if task.status is not TaskStatus.PENDING:
                continue
            if all(self.tasks[d].status is TaskStatus.DONE for d in task.depends_on):
                task.status = TaskStatus.READY
        ready = [t for t in self.tasks.values() if t.status is TaskStatus.READY]
        ready.sort(key=lambda t: t.id)
        return ready

    def topological_order(self) -> list[str]:
        """Deterministic linear extension; lexicographic id tie-break."""
        order = _kahn_order(self.tasks)
        if len(order) != len(self.tasks):
            raise CycleDetectedError(_find_cycle(self.tasks))
        return order

    def sink_ids(self) -> list[str]:
        """Ids of tasks nothing depends on, in topological order."""
        topo = self.topological_order()
        return [tid for tid in topo if not self.dependents[tid]]

    def all_done(self) -> bool:
        return all(t.status is TaskStatus.DONE for t in self.tasks.values())

    def has_failure(self) -> bool:
        return any(t.status is TaskStatus.FAILED for t in self.tasks.values())

    def in_flight(self) -> list[Task]:
        return [
            t
            for t in self.tasks.values()
            if t.status in (TaskStatus.READY, TaskStatus.RUNNING)
        ]

    # -- transitions -------------------------------------------------------

    def _get(self, task_id: str) -> Task:
        try:
            return self.tasks[task_id]
        except KeyError:
            raise UnknownTaskError(f"unknown task {task_id!r}") from None

    def start_task(self, task_id: str) -> Task:
        task = self._get(task_id)
        if task.status is not TaskStatus.READY:
            raise InvalidTransitionError(
                f"cannot start task {task_id!r} in status {task.status.value}"
            )
        task.status = TaskStatus.RUNNING
        return task

    def complete_task(self, task_id: str, result: str) -> Task:
        """Mark a running task done and propagate its result to dependents."""
        task = self._get(task_id)
        if task.status is not TaskStatus.RUNNING:
            raise InvalidTransitionError(
                f"cannot complete task {task_id!r} in status {task.status.value}"
            )
        task.status = TaskStatus.DONE
        task.result = result
        for child_id in self.dependents[task_id]:
            self.tasks[child_id].dependency_results[task_id] = result
        return task

    def fail_task(self, task_id: str, reason: str) -> Task:
        task = self._get(task_id)
        if task.status is not TaskStatus.RUNNING:
            raise InvalidTransitionError(
                f"cannot fail task {task_id!r} in status {task.status.value}"
            )
        task.status = TaskStatus.FAILED
        task.result = reason
        return task

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {"tasks": [self.tasks[tid].to_dict() for tid in sorted(self.tasks)]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TaskQueue":
        return cls(Task.from_dict(t) for t in data["tasks"])


def build_queue(specs: list[dict[str, Any]]) -> TaskQueue:
    """Build a validated TaskQueue from plan-interchange task specs.

    Each spec is ``{"id", "description", "depends_on", "unit_hint"?}``.
    Tasks with no dependencies come out Ready, the rest Pending.
    """
    if not specs:
        raise ValueError("plan contains no tasks")
    seen: set[str] = set()
    tasks = []
    for spec in specs:
        tid = spec["id"]
        if tid in seen:
            raise DuplicateIdError(f"duplicate task id {tid!r}")
        seen.add(tid)
        tasks.append(
            Task(
                id=tid,
                description=spec["description"],
                depends_on=set(spec.get("depends_on", [])),
                unit_hint=spec.get("unit_hint"),
            )
        )
    queue = TaskQueue(tasks)
    queue.ready_tasks()
    return queue


def _kahn_order(tasks: dict[str, Task]) -> list[str]:
    indegree = {tid: len(task.depends_on) for tid, task in tasks.items()}
    dependents: dict[str, list[str]] = {tid: [] for tid in tasks}
    for tid, task in tasks.items():
        for dep in task.depends_on:
            if dep in dependents:
                dependents[dep].append(tid)
    heap = [tid for tid, deg in indegree.items() if deg == 0]
    heapify(heap)
    order = []
    while heap:
        tid = heappop(heap)
        order.append(tid)
        for child in dependents[tid]:
            indegree[child] -= 1
            if indegree[child] == 0:
                heappush(heap, child)
    return order


def _find_cycle(tasks: dict[str, Task]) -> list[str]:
    """Return one dependency cycle as a closed id path."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = {tid: WHITE for tid in tasks}
    parent: dict[str, str] = {}

    def dfs(start: str) -> Optional[list[str]]:
        stack = [(start, iter(sorted(tasks[start].depends_on)))]
        color[start] = GREY
        while stack:
            node, it = stack[-1]
            advanced = False
            for dep in it:
                if dep not in tasks:
                    continue
                if color[dep] == GREY:
                    cycle = [dep, node]
                    cur = node
                    while cur != dep:
                        cur = parent[cur]
                        cycle.append(cur)
                    cycle.reverse()
                    return cycle
                if color[dep] == WHITE:
                    color[dep] = GREY
                    parent[dep] = node
                    stack.append((dep, iter(sorted(tasks[dep].depends_on))))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
        return None

    for tid in sorted(tasks):
        if color[tid] == WHITE:
            cycle = dfs(tid)
            if cycle:
                return cycle
    return []


class EventKind(str, Enum):
    PLAN_CREATED = "plan_created"
    TASK_RELEASED = "task_released"
    TASK_STARTED = "task_started"
    AGENT_SELECTED = "agent_selected"
    MODEL_CALL = "model_call"
    TOOL_INVOKED = "tool_invoked"
    OBSERVATION_ADDED = "observation_added"
    TASK_COMPLETED = "task_completed"
    TASK_FAILED = "task_failed"
    VERDICT_ISSUED = "verdict_issued"
    FEEDBACK_INJECTED = "feedback_injected"
    HUMAN_REQUESTED = "human_requested"
    HUMAN_RESPONDED = "human_responded"
    SNAPSHOT = "snapshot"
    RESUMED = "resumed"


@dataclass
class WorkflowEvent:
    sequence_no: int
    timestamp: datetime
    kind: EventKind
    payload: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "sequence_no": self.sequence_no,
            "timestamp": self.timestamp.isoformat(),
            "kind": self.kind.value,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "WorkflowEvent":
        return cls(
            sequence_no=data["sequence_no"],
            timestamp=datetime.fromisoformat(data["timestamp"]),
            kind=EventKind(data["kind"]),
            payload=dict(data.get("payload", {})),
        )


class EventLog:
    """Append-only, totally ordered per-workflow event log.

    Appends are thread-safe; sequence numbers are gap-free starting at 0.
    ``wait_for`` supports long-polling readers.
    """

    def __init__(self) -> None:
        self._events: list[WorkflowEvent] = []
        self._cond = threading.Condition()

    def append(self, kind: EventKind, payload: Optional[dict[str, Any]] = None) -> WorkflowEvent:
        with self._cond:
            event = WorkflowEvent(
                sequence_no=len(self._events),
                timestamp=datetime.now(timezone.utc),
                kind=kind,
                payload=payload or {},
            )
            self._events.append(event)
            self._cond.notify_all()
            return event

    def events(self, from_seq: int = 0) -> list[WorkflowEvent]:
        with self._cond:
            return self._events[from_seq:]

    def __len__(self) -> int:
        with self._cond:
            return len(self._events)

    def wait_for(self, from_seq: int, timeout: float = 10.0) -> list[WorkflowEvent]:
        """Block until an event with sequence_no >= from_seq exists."""
        with self._cond:
            self._cond.wait_for(lambda: len(self._events) > from_seq, timeout=timeout)
            return self._events[from_seq:]

    def replace(self, events: Iterable[WorkflowEvent]) -> None:
        """Restore a persisted log (resume path)."""
        with self._cond:
            self._events = list(events)
            self._cond.notify_all()


class Phase(str, Enum):
    PLANNING = "planning"
    EXECUTING = "executing"
    VERIFYING = "verifying"
    REPLANNING = "replanning"
    DONE = "done"
    FAILED = "failed"
    PAUSED = "paused"


@dataclass
class WorkflowState:
    """The whole run: instruction, plan, phase, verdict, event log."""

    workflow_id: str
    instruction: str
    queue: Optional[TaskQueue] = None
    phase: Phase = Phase.PLANNING
    final_result: Optional[str] = None
    verdict: Optional[bool] = None
    replan_count: int = 0
    event_log: EventLog = field(default_factory=EventLog)

    def to_dict(self) -> dict[str, Any]:
        return {
            "workflow_id": self.workflow_id,
            "instruction": self.instruction,
            "queue": self.queue.to_dict() if self.queue else None,
            "phase": self.phase.value,
            "final_result": self.final_result,
            "verdict": self.verdict,
            "replan_count": self.replan_count,
            "events": [e.to_dict() for e in self.event_log.events()],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "WorkflowState":
        state = cls(
            workflow_id=data["workflow_id"],
            instruction=data["instruction"],
            queue=TaskQueue.from_dict(data["queue"]) if data.get("queue") else None,
            phase=Phase(data["phase"]),
            final_result=data.get("final_result"),
            verdict=data.get("verdict"),
            replan_count=data.get("replan_count", 0),
        )
        state.event_log.replace(
            WorkflowEvent.from_dict(e) for e in data.get("events", [])
        )
        return state
