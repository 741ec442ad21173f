"""Agents, agent units, matchers, and the task executor.

A unit owns a group of agents plus a selection policy; the executor
drives one task through the unit under one of five collaboration
topologies: Independent (one agent works alone), Sequential (fixed
rotation), Joint (peers handing off via @-mentions), Hierarchical (a
lead delegates single steps to workers who report back), and Broadcast
(the lead fans one message to every worker and waits for all replies).
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from agentflow.backend import ChatBackend, Embedder, cosine, embed
from agentflow.core import EventKind, EventLog, Message, Origin, Role, Task
from agentflow.memory import EpisodeScope, EpisodeStore, ShortMemory, make_episode
from agentflow.prompts import (
    DEFAULT_SYSTEM_TEMPLATE,
    DEFAULT_TERMINATION,
    RefKind,
    StageSequence,
    StepOutput,
    make_observation,
    render_step,
    render_system,
    stage_instructions_for,
    step_iterative,
    termination_instruction_for,
)
from agentflow.tools import RefinerConfig, Toolbox, invoke, refine, tools_block

logger = logging.getLogger(__name__)

EPISODE_SNIPPET_CAP = 1000


class AgentError(Exception):
    pass


class EmptySequenceError(AgentError):
    pass


class MaxIterationsExceededError(AgentError):
    pass


class TaskExecutionError(AgentError):
    def __init__(self, message: str, trace: "ExecutionTrace"):
        self.trace = trace
        super().__init__(message)


@dataclass
class AgentSpec:
    """Persona + strategy + toolbox for one agent."""

    name: str
    persona: str
    strategy: Optional[StageSequence] = None  # None marks a non-iterative agent
    toolbox: Toolbox = field(default_factory=Toolbox)
    refiner: RefinerConfig = field(default_factory=RefinerConfig)
    temperature: float = 0.2
    max_tokens: int = 2048
    may_terminate: bool = True
    is_lead: bool = False


class Topology(str, Enum):
    INDEPENDENT = "independent"
    SEQUENTIAL = "sequential"
    JOINT = "joint"
    HIERARCHICAL = "hierarchical"
    BROADCAST = "broadcast"


class MatcherKind(str, Enum):
    ITERATIVE = "iterative"
    SEMANTIC = "semantic"
    MENTION = "mention"
    COMPOSITE = "composite"


@dataclass
class MatcherConfig:
    kind: MatcherKind = MatcherKind.SEMANTIC
    components: list[MatcherKind] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.kind is MatcherKind.COMPOSITE and not self.components:
            raise ValueError("composite matcher needs a non-empty component chain")


@dataclass
class AgentUnit:
    """Container of agents with a matching policy; units, not agents, get tasks."""

    name: str
    agents: list[AgentSpec]
    topology: Topology = Topology.INDEPENDENT
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    sequence: Optional[list[str]] = None
    max_iterations: int = 12
    broadcast_round_limit: int = 4
    description: str = ""

    def __post_init__(self) -> None:
        if not self.agents:
            raise ValueError(f"unit {self.name!r} has no agents")
        names = [a.name for a in self.agents]
        if len(set(names)) != len(names):
            raise ValueError(f"unit {self.name!r} has duplicate agent names")
        if self.sequence:
            unknown = set(self.sequence) - set(names)
            if unknown:
                raise ValueError(f"sequence references non-members: {sorted(unknown)}")
        if self.topology in (Topology.HIERARCHICAL, Topology.BROADCAST):
            leads = [a for a in self.agents if a.is_lead]
            if len(leads) != 1:
                raise ValueError(
                    f"{self.topology.value} unit {self.name!r} needs exactly one lead"
                )
            for agent in self.agents:
                if not agent.is_lead and agent.may_terminate:
                    raise ValueError(
                        f"non-lead {agent.name!r} must not be allowed to terminate"
                    )

    def get(self, name: str) -> AgentSpec:
        for agent in self.agents:
            if agent.name == name:
                return agent
        raise AgentError(f"unit {self.name!r} has no agent {name!r}")

    def lead(self) -> AgentSpec:
        for agent in self.agents:
            if agent.is_lead:
                return agent
        raise AgentError(f"unit {self.name!r} has no lead agent")

    def roster(self) -> list[str]:
        return [a.name for a in self.agents]

    def matching_text(self) -> str:
        return self.description or " ".join(a.persona for a in self.agents)


@dataclass
class TraceStep:
    iteration: int
    agent: str
    stages: list[str]
    action: Optional[str] = None
    terminal: bool = False
    observation_source: Optional[str] = None  # tool | human | handoff | continue


@dataclass
class ExecutionTrace:
    task_id: str
    steps: list[TraceStep] = field(default_factory=list)

    def agent_names(self) -> list[str]:
        return [s.agent for s in self.steps]


# -- matchers -----------------------------------------------------------------

def match_unit(units: list[AgentUnit], task: Task, embedder: Embedder = embed) -> AgentUnit:
    """Pick the unit for a task: the hint wins, else semantic ranking."""
    if not units:
        raise AgentError("no agent units configured")
    if task.unit_hint:
        for unit in units:
            if unit.name.lower() == task.unit_hint.lower():
                return unit
        logger.warning(
            "unit hint %r matches no unit; falling back to semantic match",
            task.unit_hint,
        )
    if len(units) == 1:
        return units[0]
    task_vector = embedder(task.description)
    best, best_score = units[0], None
    for unit in units:
        score = cosine(task_vector, embedder(unit.matching_text()))
        if best_score is None or score > best_score:
            best, best_score = unit, score
    return best


def match_iterative(unit: AgentUnit, iteration_index: int) -> AgentSpec:
    """Fixed rotation; wraps around when iterations outrun the sequence."""
    if not unit.sequence:
        raise EmptySequenceError(f"unit {unit.name!r} has no agent sequence")
    name = unit.sequence[iteration_index % len(unit.sequence)]
    return unit.get(name)


def match_semantic(unit: AgentUnit, task_description: str, embedder: Embedder = embed) -> AgentSpec:
    """Most relevant persona for the task; ties keep unit order."""
    task_vector = embedder(task_description)
    best, best_score = unit.agents[0], None
    for agent in unit.agents:
        score = cosine(task_vector, embedder(agent.persona))
        if best_score is None or score > best_score:
            best, best_score = agent, score
    return best


HUMAN_PROXY = "HumanProxy"


def match_mention(unit: AgentUnit, step: StepOutput, current: AgentSpec) -> AgentSpec | str:
    """Resolve a step's Next mention to an agent (or the human channel)."""
    ref = step.next_agent
    if ref is None or ref.kind is RefKind.SELF:
        return current
    if ref.kind is RefKind.HUMAN_PROXY:
        return HUMAN_PROXY
    return unit.get(ref.name)


# -- human feedback channel ----------------------------------------------------

class NoOutstandingRequestError(AgentError):
    pass


class FeedbackHub:
    """Thread-safe channel carrying human feedback into running tasks.

    Incidental feedback queues per task and is delivered at the next
    observation position. Intentional requests (@HumanProxy) block the
    task until a response arrives or the timeout converts to "Continue".
    """

    def __init__(self, human_timeout: Optional[float] = None):
        self.human_timeout = human_timeout
        self._cond = threading.Condition()
        self._incidental: dict[str, list[str]] = {}
        self._outstanding: dict[str, str] = {}
        self._responses: dict[str, str] = {}

    def put_incidental(self, task_id: str, content: str) -> None:
        with self._cond:
            self._incidental.setdefault(task_id, []).append(content)

    def drain_incidental(self, task_id: str) -> list[str]:
        with self._cond:
            return self._incidental.pop(task_id, [])

    def request_human(self, task_id: str, prompt: str) -> str:
        """Block until a human response (or timeout → "Continue")."""
        with self._cond:
            self._outstanding[task_id] = prompt
            self._cond.notify_all()
            self._cond.wait_for(
                lambda: task_id in self._responses, timeout=self.human_timeout
            )
            self._outstanding.pop(task_id, None)
            return self._responses.pop(task_id, "Continue")

    def respond_human(self, task_id: str, content: str) -> None:
        with self._cond:
            if task_id not in self._outstanding:
                raise NoOutstandingRequestError(
                    f"no outstanding human request for task {task_id!r}"
                )
            self._responses[task_id] = content
            self._cond.notify_all()

    def outstanding(self) -> dict[str, str]:
        with self._cond:
            return dict(self._outstanding)

    def wait_outstanding(self, task_id: str, timeout: float = 5.0) -> bool:
        with self._cond:
            return self._cond.wait_for(lambda: task_id in self._outstanding, timeout=timeout)


# -- executor -------------------------------------------------------------------

@dataclass
class ExecutionServices:
    """Everything the executor needs besides the unit and the task."""

    backend: ChatBackend
    embedder: Embedder = embed
    episode_store: Optional[EpisodeStore] = None
    event_log: Optional[EventLog] = None
    feedback: Optional[FeedbackHub] = None
    workflow_id: str = "workflow"
    termination_literal: str = DEFAULT_TERMINATION
    retrieval_k: int = 3

    def emit(self, kind: EventKind, payload: dict[str, Any]) -> None:
        if self.event_log is not None:
            self.event_log.append(kind, payload)


def build_task_context(task: Task, services: ExecutionServices) -> str:
    """Initial User message: description, direct results, episodic recall."""
    parts = [f"Task: {task.description}"]
    if task.dependency_results:
        parts.append("\nResults of prerequisite tasks:")
        for dep_id in sorted(task.dependency_results):
            parts.append(f"- {dep_id}: {task.dependency_results[dep_id]}")
    if services.episode_store is not None and len(services.episode_store):
        scope = EpisodeScope(
            indirect_only=True,
            successful_only=True,
            direct_dependency_ids=set(task.depends_on),
        )
        hits = services.episode_store.query(
            task.description, scope=scope, k=services.retrieval_k
        )
        if hits:
            parts.append("\nRelevant prior results:")
            for episode, _score in hits:
                snippet = episode.result[:EPISODE_SNIPPET_CAP]
                parts.append(f"- [{episode.task_id}] {episode.description}: {snippet}")
    return "\n".join(parts)


class Executor:
    """Runs one task through an agent unit under its topology."""

    def __init__(self, services: ExecutionServices):
        self.services = services

    # memory management ------------------------------------------------------

    def _agents_block(self, unit: AgentUnit, agent: AgentSpec) -> str:
        if unit.topology in (Topology.INDEPENDENT, Topology.SEQUENTIAL):
            return ""
        if unit.topology is Topology.JOINT:
            others = [a for a in unit.agents if a.name != agent.name]
        elif unit.topology is Topology.HIERARCHICAL:
            others = (
                [a for a in unit.agents if a.name != agent.name]
                if agent.is_lead
                else [unit.lead()]
            )
        else:  # Broadcast: workers are unaware of each other
            others = [a for a in unit.agents if a.name != agent.name] if agent.is_lead else []
        if not others:
            return ""
        lines = ["\nYou are working with the following agents:"]
        for other in others:
            lines.append(f"- {other.name}: {other.persona}")
        return "\n".join(lines) + "\n"

    def _make_memory(self, unit: AgentUnit, agent: AgentSpec, task: Task, context: str) -> ShortMemory:
        refined = refine(agent.toolbox, task.description, agent.refiner, self.services.embedder)
        stage_instr = (
            stage_instructions_for(agent.strategy, self.services.termination_literal)
            if agent.strategy
            else ""
        )
        if agent.may_terminate:
            termination = termination_instruction_for(self.services.termination_literal)
        else:
            termination = (
                "\nYou may not produce the final result yourself; report your "
                "work back to the lead agent instead.\n"
            )
        system = render_system(
            DEFAULT_SYSTEM_TEMPLATE,
            persona=agent.persona,
            objective=task.description,
            tools_block=tools_block(refined),
            agents_block=self._agents_block(unit, agent),
            stage_instructions=stage_instr,
            termination_instruction=termination,
        )
        memory = ShortMemory()
        memory.append(Message(role=Role.SYSTEM, content=system))
        memory.append(Message(role=Role.USER, content=context))
        return memory

    # step plumbing ----------------------------------------------------------

    def _deliver_feedback(self, task: Task, memory: ShortMemory) -> None:
        if self.services.feedback is None:
            return
        for content in self.services.feedback.drain_incidental(task.id):
            memory.append(make_observation(content, origin=Origin.HUMAN))
            self.services.emit(
                EventKind.OBSERVATION_ADDED,
                {"task_id": task.id, "source": "human", "content": content},
            )

    def _step(
        self,
        unit: AgentUnit,
        agent: AgentSpec,
        task: Task,
        memory: ShortMemory,
        trace: ExecutionTrace,
    ) -> StepOutput:
        if len(trace.steps) >= unit.max_iterations:
            raise MaxIterationsExceededError(
                f"task {task.id!r} exceeded {unit.max_iterations} iterations"
            )
        self._deliver_feedback(task, memory)
        self.services.emit(
            EventKind.AGENT_SELECTED,
            {"task_id": task.id, "agent": agent.name, "iteration": len(trace.steps)},
        )
        step = step_iterative(
            agent.strategy,
            memory,
            self.services.backend,
            termination_literal=self.services.termination_literal,
            roster=unit.roster(),
            temperature=agent.temperature,
            max_tokens=agent.max_tokens,
        )
        trace.steps.append(
            TraceStep(
                iteration=len(trace.steps),
                agent=agent.name,
                stages=list(step.stages),
                action=step.action.tool_name if step.action else None,
                terminal=step.terminal is not None,
            )
        )
        return step

    def _run_action(self, agent: AgentSpec, task: Task, step: StepOutput, memory: ShortMemory, trace: ExecutionTrace) -> str:
        observation = invoke(agent.toolbox, step.action)
        self.services.emit(
            EventKind.TOOL_INVOKED,
            {
                "task_id": task.id,
                "agent": agent.name,
                "tool": step.action.tool_name,
                "ok": not observation.startswith("Error:"),
            },
        )
        memory.append(make_observation(observation))
        self.services.emit(
            EventKind.OBSERVATION_ADDED,
            {"task_id": task.id, "source": "tool", "content": observation[:500]},
        )
        trace.steps[-1].observation_source = "tool"
        return observation

    def _ask_human(self, agent: AgentSpec, task: Task, step: StepOutput, memory: ShortMemory, trace: ExecutionTrace) -> None:
        prompt = step.stages.get("Dialog Thought") or render_step(
            step, agent.strategy, self.services.termination_literal
        )
        self.services.emit(
            EventKind.HUMAN_REQUESTED,
            {"task_id": task.id, "agent": agent.name, "prompt": prompt},
        )
        if self.services.feedback is None:
            response = "Continue"
        else:
            response = self.services.feedback.request_human(task.id, prompt)
        self.services.emit(
            EventKind.HUMAN_RESPONDED, {"task_id": task.id, "content": response}
        )
        memory.append(make_observation(response, origin=Origin.HUMAN))
        self.services.emit(
            EventKind.OBSERVATION_ADDED,
            {"task_id": task.id, "source": "human", "content": response[:500]},
        )
        trace.steps[-1].observation_source = "human"

    @staticmethod
    def _handoff_text(sender: AgentSpec, step: StepOutput, sequence: StageSequence, literal: str) -> str:
        dialog = step.stages.get("Dialog Thought")
        if dialog:
            return f"From {sender.name}: {dialog}"
        return f"From {sender.name}:\n{render_step(step, sequence, literal)}"

    # topology loops ---------------------------------------------------------

    def execute_task(self, unit: AgentUnit, task: Task) -> tuple[str, ExecutionTrace]:
        """Run the task to completion under the unit's topology.

        Returns the result text and the trace; stores an episode and
        purges all short memories on the way out.
        """
        trace = ExecutionTrace(task_id=task.id)
        context = build_task_context(task, self.services)
        memories: dict[str, ShortMemory] = {}

        def memory_for(agent: AgentSpec) -> ShortMemory:
            if agent.name not in memories:
                memories[agent.name] = self._make_memory(unit, agent, task, context)
            return memories[agent.name]

        runner = {
            Topology.INDEPENDENT: self._run_independent,
            Topology.SEQUENTIAL: self._run_sequential,
            Topology.JOINT: self._run_joint,
            Topology.HIERARCHICAL: self._run_hierarchical,
            Topology.BROADCAST: self._run_broadcast,
        }[unit.topology]
        try:
            result = runner(unit, task, trace, memory_for)
        except Exception as exc:
            self._store_episode(task, f"failed: {exc}", success=False)
            raise TaskExecutionError(str(exc), trace) from exc
        finally:
            for memory in memories.values():
                memory.purge()
        self._store_episode(task, result, success=True)
        return result, trace

    def _store_episode(self, task: Task, result: str, success: bool) -> None:
        if self.services.episode_store is None:
            return
        episode = make_episode(
            workflow_id=self.services.workflow_id,
            task_id=task.id,
            description=task.description,
            result=result,
            dependency_ids=sorted(task.depends_on),
            success=success,
            embedder=self.services.embedder,
        )
        self.services.episode_store.store(episode)

    def _select_initial(self, unit: AgentUnit, task: Task) -> AgentSpec:
        if unit.matcher.kind is MatcherKind.ITERATIVE:
            return match_iterative(unit, 0)
        return match_semantic(unit, task.description, self.services.embedder)

    def _run_independent(self, unit, task, trace, memory_for) -> str:
        agent = self._select_initial(unit, task)
        memory = memory_for(agent)
        while True:
            step = self._step(unit, agent, task, memory, trace)
            if step.terminal is not None:
                return step.terminal
            if step.action is not None:
                self._run_action(agent, task, step, memory, trace)
            elif step.next_agent is not None and step.next_agent.kind is RefKind.HUMAN_PROXY:
                self._ask_human(agent, task, step, memory, trace)
            else:
                memory.append(make_observation(""))
                trace.steps[-1].observation_source = "continue"

    def _run_sequential(self, unit, task, trace, memory_for) -> str:
        if not unit.sequence:
            raise EmptySequenceError(f"unit {unit.name!r} has no agent sequence")
        iteration = 0
        while True:
            agent = match_iterative(unit, iteration)
            memory = memory_for(agent)
            step = self._step(unit, agent, task, memory, trace)
            if step.terminal is not None and agent.may_terminate:
                return step.terminal
            if step.action is not None:
                self._run_action(agent, task, step, memory, trace)
            # pass the turn's visible output to the next agent in the rotation
            next_agent = match_iterative(unit, iteration + 1)
            if next_agent.name != agent.name:
                handoff = self._handoff_text(
                    agent, step, agent.strategy, self.services.termination_literal
                )
                memory_for(next_agent).append(
                    Message(role=Role.USER, content=handoff, origin=Origin.FRAMEWORK)
                )
                trace.steps[-1].observation_source = trace.steps[-1].observation_source or "handoff"
            elif step.action is None:
                memory.append(make_observation(""))
                trace.steps[-1].observation_source = "continue"
            iteration += 1

    def _run_joint(self, unit, task, trace, memory_for) -> str:
        current = self._select_initial(unit, task)
        while True:
            memory = memory_for(current)
            step = self._step(unit, current, task, memory, trace)
            if step.terminal is not None:
                return step.terminal
            target = match_mention(unit, step, current)
            if target == HUMAN_PROXY:
                self._ask_human(current, task, step, memory, trace)
                continue
            if target.name == current.name:
                if step.action is not None:
                    self._run_action(current, task, step, memory, trace)
                else:
                    memory.append(make_observation(""))
                    trace.steps[-1].observation_source = "continue"
                continue
            handoff = self._handoff_text(
                current, step, current.strategy, self.services.termination_literal
            )
            memory_for(target).append(
                Message(role=Role.USER, content=handoff, origin=Origin.FRAMEWORK)
            )
            trace.steps[-1].observation_source = "handoff"
            current = target

    def _run_hierarchical(self, unit, task, trace, memory_for) -> str:
        lead = unit.lead()
        while True:
            lead_memory = memory_for(lead)
            step = self._step(unit, lead, task, lead_memory, trace)
            if step.terminal is not None:
                return step.terminal
            target = match_mention(unit, step, lead)
            if target == HUMAN_PROXY:
                self._ask_human(lead, task, step, lead_memory, trace)
                continue
            if target.name == lead.name:
                if step.action is not None:
                    self._run_action(lead, task, step, lead_memory, trace)
                else:
                    lead_memory.append(make_observation(""))
                    trace.steps[-1].observation_source = "continue"
                continue
            # delegate exactly one step to the worker, then report back
            worker = target
            worker_memory = memory_for(worker)
            worker_memory.append(
                Message(
                    role=Role.USER,
                    content=self._handoff_text(
                        lead, step, lead.strategy, self.services.termination_literal
                    ),
                    origin=Origin.FRAMEWORK,
                )
            )
            trace.steps[-1].observation_source = "handoff"
            worker_step = self._step(unit, worker, task, worker_memory, trace)
            if worker_step.terminal is not None:
                # workers cannot end the task; their answer becomes a report
                report = worker_step.terminal
            elif worker_step.action is not None:
                observation = self._run_action(worker, task, worker_step, worker_memory, trace)
                report = (
                    render_step(worker_step, worker.strategy, self.services.termination_literal)
                    + f"\nObservation: {observation}"
                )
            else:
                report = render_step(
                    worker_step, worker.strategy, self.services.termination_literal
                )
            lead_memory.append(
                Message(
                    role=Role.USER,
                    content=f"Report from {worker.name}:\n{report}",
                    origin=Origin.FRAMEWORK,
                )
            )
            trace.steps[-1].observation_source = "handoff"

    def _run_broadcast(self, unit, task, trace, memory_for) -> str:
        lead = unit.lead()
        workers = [a for a in unit.agents if not a.is_lead]
        rounds = 0
        while True:
            lead_memory = memory_for(lead)
            step = self._step(unit, lead, task, lead_memory, trace)
            if step.terminal is not None:
                return step.terminal
            rounds += 1
            if rounds > unit.broadcast_round_limit:
                raise MaxIterationsExceededError(
                    f"task {task.id!r} exceeded {unit.broadcast_round_limit} broadcast rounds"
                )
            if step.action is not None:
                self._run_action(lead, task, step, lead_memory, trace)
            broadcast = self._handoff_text(
                lead, step, lead.strategy, self.services.termination_literal
            )
            # same message to every worker; all replies join before the next
            # lead step, and workers never see each other's replies
            replies: list[tuple[AgentSpec, str]] = []
            for worker in workers:
                worker_memory = memory_for(worker)
                worker_memory.append(
                    Message(role=Role.USER, content=broadcast, origin=Origin.FRAMEWORK)
                )
                worker_step = self._step(unit, worker, task, worker_memory, trace)
                if worker_step.terminal is not None:
                    reply = worker_step.terminal
                elif worker_step.action is not None:
                    observation = self._run_action(worker, task, worker_step, worker_memory, trace)
                    reply = (
                        render_step(worker_step, worker.strategy, self.services.termination_literal)
                        + f"\nObservation: {observation}"
                    )
                else:
                    reply = render_step(
                        worker_step, worker.strategy, self.services.termination_literal
                    )
                replies.append((worker, reply))
            for worker, reply in replies:
                lead_memory.append(
                    Message(
                        role=Role.USER,
                        content=f"Reply from {worker.name}:\n{reply}",
                        origin=Origin.FRAMEWORK,
                    )
                )
