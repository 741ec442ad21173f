"""Acceptance suite: every exit criterion as one test, with a printed
PASS/FAIL line per criterion.

Oracles used here are independent of the paths they check: the scheduler
is checked by a brute-force edge validator, semantic ranking by an
exhaustive cosine sort, and episodic retrieval by an O(n) scan.
"""

from __future__ import annotations

import itertools
import json
import random
import threading
import time
from contextlib import contextmanager
from agentflow.agents import (
    AgentSpec,
    AgentUnit,
    ExecutionServices,
    Executor,
    MatcherConfig,
    MatcherKind,
    Topology,
    match_semantic,
    match_unit,
)
from agentflow.backend import ScriptEntry, ScriptedBackend, cosine, embed
from agentflow.coordinator import (
    Coordinator,
    FeedbackEnvelope,
    FeedbackKind,
    WorkflowConfig,
    resume,
    run_workflow,
)
from agentflow.core import EventKind, EventLog, Message, Phase, Role, Task, TaskStatus, build_queue
from agentflow.memory import EpisodeScope, EpisodeStore, ShortMemory, make_episode
from agentflow.prompts import (
    conv_sequence,
    make_observation,
    plan_react_sequence,
    programmable,
    react_sequence,
    render_system,
    stage_instructions_for,
    step_iterative,
    termination_instruction_for,
    DEFAULT_SYSTEM_TEMPLATE,
)
from agentflow.tools import ParamSpec, RefinerConfig, RefinerKind, Toolbox, ToolSpec, invoke, refine, tools_block
from agentflow.workflows import EXAMPLES


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"FAIL  {name}")
        raise
    print(f"PASS  {name}")


# ---------------------------------------------------------------------------
# 1. DAG scheduler oracle equivalence
# ---------------------------------------------------------------------------

def test_dag_scheduler_oracle_equivalence():
    with criterion("dag-scheduler-oracle-equivalence (500 random DAGs, <10s)"):
        rng = random.Random(20240917)
        started = time.monotonic()
        for _ in range(500):
            n = rng.randint(1, 10)
            ids = [f"n{i}" for i in range(n)]
            specs = []
            for i, tid in enumerate(ids):
                deps = [ids[j] for j in range(i) if rng.random() < rng.uniform(0.1, 0.8)]
                specs.append({"id": tid, "description": tid, "depends_on": deps})
            queue = build_queue(specs)
            completion_order: list[str] = []
            while True:
                ready = queue.ready_tasks()
                if not ready:
                    break
                for task in ready:
                    # no task starts before all its dependencies are done
                    assert all(
                        queue.tasks[d].status is TaskStatus.DONE for d in task.depends_on
                    )
                    queue.start_task(task.id)
                    queue.complete_task(task.id, f"r-{task.id}")
                    completion_order.append(task.id)
            assert queue.all_done()
            # brute-force linear-extension check over every edge
            position = {tid: i for i, tid in enumerate(completion_order)}
            for spec in specs:
                for dep in spec["depends_on"]:
                    assert position[dep] < position[spec["id"]]
        elapsed = time.monotonic() - started
        assert elapsed < 10.0, f"took {elapsed:.2f}s"


# ---------------------------------------------------------------------------
# 2. Strategy equivalence: ReAct/PlanReAct == Programmable
# ---------------------------------------------------------------------------

def _echo_toolbox() -> Toolbox:
    toolbox = Toolbox()
    toolbox.register(
        ToolSpec(
            name="echo",
            description="Echo text back.",
            input_schema=(ParamSpec("text", "string"),),
        ),
        lambda a: a["text"],
    )
    return toolbox


def _run_iterative_session(sequence, entries: list[ScriptEntry]) -> list[tuple[str, str]]:
    backend = ScriptedBackend([ScriptEntry(e.expect, e.response) for e in entries])
    toolbox = _echo_toolbox()
    system = render_system(
        DEFAULT_SYSTEM_TEMPLATE,
        persona="You are a careful worker.",
        objective="Work the task.",
        tools_block=tools_block(toolbox.specs()),
        stage_instructions=stage_instructions_for(sequence),
        termination_instruction=termination_instruction_for(),
    )
    memory = ShortMemory()
    memory.append(Message(role=Role.SYSTEM, content=system))
    memory.append(Message(role=Role.USER, content="Task: work the task"))
    for _ in range(10):
        step = step_iterative(sequence, memory, backend)
        if step.terminal is not None:
            break
        if step.action is not None:
            memory.append(make_observation(invoke(toolbox, step.action)))
        else:
            memory.append(make_observation(""))
    return backend.transcript


def _strategy_fixture(rng: random.Random, with_plan: bool) -> list[ScriptEntry]:
    entries = []
    steps = rng.randint(1, 3)
    for i in range(steps):
        plan_line = f"Plan: step {i} of the plan {rng.randint(0, 99)}\n" if with_plan else ""
        entries.append(
            ScriptEntry(
                None,
                plan_line
                + f"Thought: considering option {rng.randint(0, 99)}\n"
                + 'Action: {"tool": "echo", "input": {"text": "'
                + f"payload {rng.randint(0, 99)}"
                + '"}}',
            )
        )
    plan_line = "Plan: finishing\n" if with_plan else ""
    entries.append(
        ScriptEntry(None, plan_line + f"Thought: done\nFINAL ANSWER: answer {rng.randint(0, 99)}")
    )
    return entries


def test_strategy_equivalence():
    with criterion("strategy-equivalence (ReAct/PlanReAct vs Programmable, 20 fixtures)"):
        rng = random.Random(7)
        for fixture_no in range(20):
            with_plan = fixture_no % 2 == 1
            entries = _strategy_fixture(rng, with_plan)
            if with_plan:
                dedicated = _run_iterative_session(plan_react_sequence(), entries)
                generic = _run_iterative_session(
                    programmable(["Plan", "Thought", "Action", "Observation"]), entries
                )
            else:
                dedicated = _run_iterative_session(react_sequence(), entries)
                generic = _run_iterative_session(
                    programmable(["Thought", "Action", "Observation"]), entries
                )
            assert dedicated == generic  # byte-identical transcripts


# ---------------------------------------------------------------------------
# 3. Topology contracts on randomized scripted fixtures
# ---------------------------------------------------------------------------

def _services(backend) -> ExecutionServices:
    return ExecutionServices(backend=backend, event_log=EventLog())


def _ready_task(description: str = "work") -> Task:
    return Task(id="t", description=description, status=TaskStatus.READY)


def _check_independent(rng: random.Random) -> None:
    unit = AgentUnit(
        name="u",
        agents=[
            AgentSpec(name=f"A{i}", persona=f"persona {i}", strategy=react_sequence(),
                      toolbox=_echo_toolbox())
            for i in range(3)
        ],
        topology=Topology.INDEPENDENT,
    )
    entries = []
    for i in range(rng.randint(0, 3)):
        entries.append(
            ScriptEntry(None, f'Thought: s{i}\nAction: {{"tool":"echo","input":{{"text":"x{i}"}}}}')
        )
    entries.append(ScriptEntry(None, "Thought: end\nFINAL ANSWER: done"))
    executor = Executor(_services(ScriptedBackend(entries)))
    result, trace = executor.execute_task(unit, _ready_task(f"task {rng.randint(0,999)}"))
    assert result == "done"
    assert len(set(trace.agent_names())) == 1  # no inter-agent communication


def _check_sequential(rng: random.Random) -> None:
    n_agents = rng.randint(2, 3)
    names = [f"S{i}" for i in range(n_agents)]
    sequence = [rng.choice(names) for _ in range(rng.randint(2, 5))]
    unit = AgentUnit(
        name="u",
        agents=[
            AgentSpec(name=n, persona=n, strategy=programmable(["Work"])) for n in names
        ],
        topology=Topology.SEQUENTIAL,
        matcher=MatcherConfig(kind=MatcherKind.ITERATIVE),
        sequence=sequence,
        max_iterations=20,
    )
    total_steps = rng.randint(1, 8)
    entries = [
        ScriptEntry(None, f"Work: output {i}") for i in range(total_steps - 1)
    ]
    entries.append(ScriptEntry(None, "Work: last\nFINAL ANSWER: seq done"))
    executor = Executor(_services(ScriptedBackend(entries)))
    result, trace = executor.execute_task(unit, _ready_task())
    assert result == "seq done"
    expected = [sequence[i % len(sequence)] for i in range(total_steps)]
    assert trace.agent_names() == expected  # order equals the configured sequence


def _check_joint(rng: random.Random) -> None:
    names = ["J0", "J1", "J2"]
    unit = AgentUnit(
        name="u",
        agents=[
            AgentSpec(name=n, persona=f"specialist {n}", strategy=conv_sequence(),
                      toolbox=_echo_toolbox())
            for n in names
        ],
        topology=Topology.JOINT,
        matcher=MatcherConfig(
            kind=MatcherKind.COMPOSITE, components=[MatcherKind.MENTION, MatcherKind.SEMANTIC]
        ),
        max_iterations=24,
    )
    task = _ready_task("specialist J1 task")
    start = match_semantic(unit, task.description)
    current = start.name
    entries = []
    expected_agents = []
    for i in range(rng.randint(1, 5)):
        expected_agents.append(current)
        if rng.random() < 0.5:
            entries.append(
                ScriptEntry(
                    None,
                    "Plan: p\nTask Thought: t\nDialog Thought: d\nNext: @Self\n"
                    f'Action: {{"tool":"echo","input":{{"text":"v{i}"}}}}',
                )
            )
        else:
            target = rng.choice([n for n in names if n != current])
            entries.append(
                ScriptEntry(
                    None,
                    f"Plan: p\nTask Thought: t\nDialog Thought: over to you\nNext: @{target}",
                )
            )
            current = target
    expected_agents.append(current)
    entries.append(
        ScriptEntry(None, "Plan: p\nTask Thought: t\nDialog Thought: d\nFINAL ANSWER: joint done")
    )
    executor = Executor(_services(ScriptedBackend(entries)))
    result, trace = executor.execute_task(unit, task)
    assert result == "joint done"
    assert trace.agent_names()[0] == start.name  # semantic start
    assert trace.agent_names() == expected_agents  # mention routing respected
    assert trace.steps[-1].terminal  # any member may terminate


def _check_hierarchical(rng: random.Random) -> None:
    unit = AgentUnit(
        name="u",
        agents=[
            AgentSpec(name="Lead", persona="lead", strategy=conv_sequence(), is_lead=True),
            AgentSpec(name="W1", persona="w1", strategy=programmable(["Thought"]),
                      may_terminate=False),
            AgentSpec(name="W2", persona="w2", strategy=programmable(["Thought"]),
                      may_terminate=False),
        ],
        topology=Topology.HIERARCHICAL,
        max_iterations=24,
    )
    entries = []
    for i in range(rng.randint(1, 4)):
        worker = rng.choice(["W1", "W2"])
        entries.append(
            ScriptEntry(
                None,
                f"Plan: p\nTask Thought: t\nDialog Thought: delegating\nNext: @{worker}",
            )
        )
        if rng.random() < 0.4:
            # a worker trying to finish the task must only produce a report
            entries.append(ScriptEntry(None, f"Thought: done\nFINAL ANSWER: premature {i}"))
        else:
            entries.append(ScriptEntry(None, f"Thought: report {i}"))
    entries.append(
        ScriptEntry(None, "Plan: p\nTask Thought: t\nDialog Thought: d\nFINAL ANSWER: lead final")
    )
    executor = Executor(_services(ScriptedBackend(entries)))
    result, trace = executor.execute_task(unit, _ready_task())
    names = trace.agent_names()
    assert result == "lead final"  # never a worker's premature answer
    assert names[0] == "Lead" and names[-1] == "Lead"
    for i, name in enumerate(names):
        if name != "Lead":
            assert names[i - 1] == "Lead" and names[i + 1] == "Lead"


def _check_broadcast(rng: random.Random) -> None:
    n_workers = rng.randint(1, 3)
    workers = [f"W{i}" for i in range(n_workers)]
    unit = AgentUnit(
        name="u",
        agents=[
            AgentSpec(name="Lead", persona="lead", strategy=programmable(["Thought"]),
                      is_lead=True)
        ]
        + [
            AgentSpec(name=w, persona=w, strategy=programmable(["Thought"]),
                      may_terminate=False)
            for w in workers
        ],
        topology=Topology.BROADCAST,
        max_iterations=40,
    )
    rounds = rng.randint(1, 3)
    entries = []
    for r in range(rounds):
        entries.append(ScriptEntry(None, f"Thought: round {r} prompt"))
        for w in workers:
            entries.append(ScriptEntry(None, f"Thought: reply of {w} in round {r}"))
    entries.append(ScriptEntry(None, "Thought: closing\nFINAL ANSWER: broadcast done"))
    backend = ScriptedBackend(entries)
    executor = Executor(_services(backend))
    result, trace = executor.execute_task(unit, _ready_task())
    assert result == "broadcast done"
    names = trace.agent_names()
    expected = []
    for r in range(rounds):
        expected.append("Lead")
        expected.extend(workers)
    expected.append("Lead")
    assert names == expected  # fan-out count per round == unit size - 1
    # workers never see each other's replies
    for i, (prompt, _) in enumerate(backend.transcript):
        step_agent = None
        position = 0
        for r in range(rounds):
            if i == position:
                step_agent = "Lead"
            position += 1
            for w in workers:
                if i == position:
                    step_agent = w
                position += 1
        if step_agent in workers:
            for other in workers:
                if other != step_agent:
                    assert f"reply of {other}" not in prompt


def test_topology_contracts():
    with criterion("topology-contracts (5 topologies x 50 randomized fixtures)"):
        rng = random.Random(99)
        checks = [
            _check_independent,
            _check_sequential,
            _check_joint,
            _check_hierarchical,
            _check_broadcast,
        ]
        for check in checks:
            for _ in range(50):
                check(rng)


# ---------------------------------------------------------------------------
# 4. Semantic refiner/matcher oracle
# ---------------------------------------------------------------------------

VOCABULARY = [
    "file", "disk", "web", "search", "code", "execute", "index", "query",
    "report", "parse", "chart", "email", "plan", "test", "deploy", "review",
]


def test_semantic_refiner_and_matcher_oracle():
    with criterion("semantic-refiner-matcher-oracle (200 random instances)"):
        rng = random.Random(4242)
        for instance in range(200):
            task_text = " ".join(rng.sample(VOCABULARY, rng.randint(2, 4)))
            if instance % 2 == 0:
                # toolbox refinement vs brute-force cosine sort
                toolbox = Toolbox()
                n = rng.randint(1, 20)
                for i in range(n):
                    toolbox.register(
                        ToolSpec(
                            name=f"tool{i}",
                            description=" ".join(rng.sample(VOCABULARY, rng.randint(2, 5))),
                        ),
                        lambda a: "",
                    )
                k = rng.randint(1, n)
                got = [
                    s.name
                    for s in refine(
                        toolbox, task_text, RefinerConfig(kind=RefinerKind.SEMANTIC, k=k)
                    )
                ]
                task_vec = embed(task_text)
                scored = [
                    (spec.name, cosine(task_vec, embed(spec.description)))
                    for spec in toolbox.specs()
                ]
                scored.sort(key=lambda pair: -pair[1])
                assert got == [name for name, _ in scored[:k]]
            else:
                # unit matching vs brute-force argmax over concatenated personas
                units = []
                for u in range(rng.randint(1, 6)):
                    agents = [
                        AgentSpec(
                            name=f"u{u}a{a}",
                            persona=" ".join(rng.sample(VOCABULARY, rng.randint(2, 5))),
                        )
                        for a in range(rng.randint(1, 3))
                    ]
                    units.append(AgentUnit(name=f"unit{u}", agents=agents))
                task = Task(id="t", description=task_text)
                picked = match_unit(units, task)
                task_vec = embed(task_text)
                best_name, best_score = None, None
                for unit in units:
                    score = cosine(task_vec, embed(" ".join(a.persona for a in unit.agents)))
                    if best_score is None or score > best_score:
                        best_name, best_score = unit.name, score
                assert picked.name == best_name


# ---------------------------------------------------------------------------
# 5. Episodic memory vs brute-force scan
# ---------------------------------------------------------------------------

def test_episodic_memory_oracle(tmp_path):
    with criterion("episodic-memory-oracle (100 episodes, 8 scope combos, reopen)"):
        rng = random.Random(1234)
        path = str(tmp_path / "episodes.jsonl")
        store = EpisodeStore(path=path)
        for i in range(100):
            store.store(
                make_episode(
                    workflow_id=f"wf{i % 3}",
                    task_id=f"t{i}",
                    description=" ".join(rng.sample(VOCABULARY, 4)),
                    result=" ".join(rng.sample(VOCABULARY, 4)),
                    dependency_ids=[],
                    success=(i % 4 != 0),
                )
            )
        deps = {"t3", "t7", "t11"}
        query = "search the web index"

        def brute_force(episodes, scope, k):
            qv = embed(query)
            kept = [e for e in episodes if scope.matches(e)]
            scored = [
                (e.episode_id, max(cosine(qv, e.description_vector), cosine(qv, e.result_vector)))
                for e in kept
            ]
            scored.sort(key=lambda pair: -pair[1])
            return scored[:k]

        for flags in itertools.product([False, True], repeat=3):
            scope = EpisodeScope(
                same_workflow_only=flags[0],
                indirect_only=flags[1],
                successful_only=flags[2],
                workflow_id="wf1",
                direct_dependency_ids=deps,
            )
            got = [(e.episode_id, s) for e, s in store.query(query, scope, k=10)]
            assert got == brute_force(store.episodes(), scope, 10), flags

        reopened = EpisodeStore(path=path)
        before = [(e.episode_id, round(s, 12)) for e, s in store.query(query, k=100)]
        after = [(e.episode_id, round(s, 12)) for e, s in reopened.query(query, k=100)]
        assert before == after


# ---------------------------------------------------------------------------
# 6. End-to-end example fixtures
# ---------------------------------------------------------------------------

def test_example_workflows_end_to_end(tmp_path):
    with criterion("end-to-end-examples (rag-qa, actor-critic, coding-joint, <5s)"):
        started = time.monotonic()

        # rag-qa: a plan of two sub-questions plus synthesis over a 10-doc corpus
        example = EXAMPLES["rag-qa"]
        config = example.build_config(tmp_path / "rag")
        assert len(list((tmp_path / "rag" / "corpus").glob("*.txt"))) == 10
        state = run_workflow(
            example.instruction, config, ScriptedBackend(example.build_fixture())
        )
        assert state.phase is Phase.DONE and state.verdict is True
        plan_event = next(
            e for e in state.event_log.events() if e.kind is EventKind.PLAN_CREATED
        )
        subquestions = [t for t in plan_event.payload["tasks"] if not t["depends_on"]]
        synthesis = [t for t in plan_event.payload["tasks"] if t["depends_on"]]
        assert len(subquestions) >= 2 and len(synthesis) == 1
        tool_calls = [
            e for e in state.event_log.events() if e.kind is EventKind.TOOL_INVOKED
        ]
        assert all(c.payload["tool"] == "semantic_search" for c in tool_calls)

        # actor-critic: three rules, linear plan, alternation, "no further edits"
        example = EXAMPLES["actor-critic"]
        config = example.build_config(tmp_path / "ac")
        assert [spec["depends_on"] for spec in config.predefined_plan] == [[], ["r1"], ["r2"]]
        backend = ScriptedBackend(example.build_fixture())
        state = run_workflow(example.instruction, config, backend)
        assert state.phase is Phase.DONE and state.verdict is True
        terminal_responses = [
            resp for _, resp in backend.transcript if "FINAL ANSWER" in resp
        ]
        assert all("No further edits required." in r for r in terminal_responses)
        r1_agents = [
            e.payload["agent"]
            for e in state.event_log.events()
            if e.kind is EventKind.AGENT_SELECTED and e.payload["task_id"] == "r1"
        ]
        assert r1_agents == ["Editor", "Critic", "Editor", "Critic"]

        # coding-joint: three agents, mention routing, a file written via file_io
        example = EXAMPLES["coding-joint"]
        config = example.build_config(tmp_path / "cj")
        state = run_workflow(
            example.instruction, config, ScriptedBackend(example.build_fixture())
        )
        assert state.phase is Phase.DONE and state.verdict is True
        assert (tmp_path / "cj" / "workspace" / "greet.py").exists()
        selected = [
            e.payload["agent"]
            for e in state.event_log.events()
            if e.kind is EventKind.AGENT_SELECTED
        ]
        assert len(set(selected)) == 3
        starting = selected[0]
        handed_off = set()
        for current, following in zip(selected, selected[1:]):
            if following != current:
                handed_off.add(current)
        # at least one @-handoff per non-starting agent
        for agent in set(selected) - {starting}:
            assert agent in handed_off, f"{agent} never handed off"

        elapsed = time.monotonic() - started
        assert elapsed < 5.0, f"examples took {elapsed:.2f}s"


# ---------------------------------------------------------------------------
# 7. Replanning bound
# ---------------------------------------------------------------------------

def _replan_config(max_replans: int) -> WorkflowConfig:
    unit = AgentUnit(
        name="workers",
        agents=[AgentSpec(name="Solo", persona="solver", strategy=react_sequence())],
        topology=Topology.INDEPENDENT,
    )
    return WorkflowConfig(
        name="replan-check",
        planner=AgentSpec(name="Planner", persona="planner", temperature=0.0),
        verifier=AgentSpec(name="Verifier", persona="verifier", temperature=0.0),
        units=[unit],
        max_replans=max_replans,
    )


def _replan_fixture() -> list[ScriptEntry]:
    plan = json.dumps({"tasks": [{"id": "t1", "description": "attempt", "depends_on": []}]})
    return [
        ScriptEntry(None, plan),
        ScriptEntry(None, "Thought: go\nFINAL ANSWER: first"),
        ScriptEntry(None, '{"verdict": false, "reason": "wrong"}'),
        ScriptEntry(None, plan),
        ScriptEntry(None, "Thought: go\nFINAL ANSWER: second"),
        ScriptEntry(None, '{"verdict": false, "reason": "still wrong"}'),
        ScriptEntry(None, plan),
        ScriptEntry(None, "Thought: go\nFINAL ANSWER: third"),
        ScriptEntry(None, '{"verdict": true, "reason": "ok"}'),
    ]


def test_replanning_bound():
    with criterion("replanning-bound (false,false,true; budgets 2 and 1)"):
        state = run_workflow("solve", _replan_config(max_replans=2), ScriptedBackend(_replan_fixture()))
        assert state.phase is Phase.DONE
        assert state.replan_count == 2
        assert state.final_result == "third"

        state = run_workflow(
            "solve", _replan_config(max_replans=1), ScriptedBackend(_replan_fixture()[:6])
        )
        assert state.phase is Phase.FAILED
        assert state.replan_count == 1
        assert state.verdict is False


# ---------------------------------------------------------------------------
# 8. Resume equivalence at every task boundary
# ---------------------------------------------------------------------------

def test_resume_equivalence(tmp_path):
    with criterion("resume-equivalence (every task-boundary snapshot, all examples)"):
        for name in ("rag-qa", "actor-critic", "coding-joint"):
            example = EXAMPLES[name]
            base_a = tmp_path / name / "uninterrupted"
            config_a = example.build_config(base_a)
            backend = ScriptedBackend(example.build_fixture())
            state = Coordinator(config_a, backend, workflow_id="wfeq").run(example.instruction)
            assert state.phase is Phase.DONE
            full_events = [(e.kind, e.payload) for e in state.event_log.events()]

            snapshots = sorted((base_a / "snapshots").glob("wfeq.0*.json"))
            assert snapshots, "no task-boundary snapshots written"
            for snap_no, snapshot_path in enumerate(snapshots):
                base_b = tmp_path / name / f"resume{snap_no}"
                config_b = example.build_config(base_b)
                resumed = resume(
                    str(snapshot_path), config_b, ScriptedBackend(example.build_fixture())
                )
                assert resumed.phase is Phase.DONE
                assert resumed.final_result == state.final_result
                cut = len(
                    json.loads(snapshot_path.read_text())["state"]["events"]
                )
                tail = [
                    (k, p)
                    for k, p in [(e.kind, e.payload) for e in resumed.event_log.events()][cut:]
                    if k is not EventKind.RESUMED
                ]
                assert tail == full_events[cut:], f"{name} snapshot {snap_no}"


# ---------------------------------------------------------------------------
# 9. Verifier purity
# ---------------------------------------------------------------------------

def test_verifier_purity(tmp_path):
    with criterion("verifier-purity (no intermediate results in any verifier prompt)"):
        for name in ("rag-qa", "actor-critic", "coding-joint", "dag-demo"):
            example = EXAMPLES[name]
            config = example.build_config(tmp_path / name)
            backend = ScriptedBackend(example.build_fixture())
            state = run_workflow(example.instruction, config, backend)
            assert state.phase is Phase.DONE
            verifier_prompt = backend.transcript[-1][0]
            assert state.instruction in verifier_prompt
            assert state.final_result in verifier_prompt
            sink_results = {state.final_result}
            for task in state.queue.tasks.values():
                if task.result and task.result not in sink_results:
                    assert task.result not in verifier_prompt, (
                        f"{name}: intermediate result of {task.id} leaked to the verifier"
                    )


# ---------------------------------------------------------------------------
# 10. Human feedback
# ---------------------------------------------------------------------------

def test_human_feedback(tmp_path):
    with criterion("human-feedback (incidental observation + human-proxy pause)"):
        # incidental: inject while the task is deliberately blocked in a tool
        gate, entered = threading.Event(), threading.Event()
        toolbox = Toolbox()
        toolbox.register(
            ToolSpec(name="hold", description="Block until released."),
            lambda a: (entered.set(), gate.wait(5), "released")[-1],
        )
        unit = AgentUnit(
            name="workers",
            agents=[AgentSpec(name="Solo", persona="worker", strategy=react_sequence(),
                              toolbox=toolbox)],
            topology=Topology.INDEPENDENT,
        )
        config = WorkflowConfig(
            name="feedback-check",
            planner=None,
            predefined_plan=[{"id": "t1", "description": "hold then finish", "depends_on": []}],
            verifier=AgentSpec(name="Verifier", persona="verifier", temperature=0.0),
            units=[unit],
        )
        backend = ScriptedBackend(
            [
                ScriptEntry(None, 'Thought: holding\nAction: {"tool":"hold","input":{}}'),
                ScriptEntry(None, "Thought: resuming\nFINAL ANSWER: done"),
                ScriptEntry(None, "true"),
            ]
        )
        coordinator = Coordinator(config, backend)
        thread = threading.Thread(target=coordinator.run, args=("hold then finish",))
        thread.start()
        assert entered.wait(5)
        coordinator.inject_feedback(
            FeedbackEnvelope(
                workflow_id=coordinator.state.workflow_id,
                kind=FeedbackKind.INCIDENTAL_OBSERVATION,
                content="remember the appendix",
                task_id="t1",
            )
        )
        gate.set()
        thread.join(10)
        assert coordinator.state.phase is Phase.DONE
        next_prompt = backend.transcript[1][0]
        assert "Observation: remember the appendix" in next_prompt

        # intentional: @HumanProxy pauses the task until the response arrives
        example = EXAMPLES["human-loop"]
        config = example.build_config(tmp_path / "human")
        backend = ScriptedBackend(example.build_fixture())
        coordinator = Coordinator(config, backend)
        thread = threading.Thread(target=coordinator.run, args=(example.instruction,))
        thread.start()
        assert coordinator.feedback.wait_outstanding("s1", timeout=5)
        assert not any(
            e.kind is EventKind.TASK_COMPLETED for e in coordinator.state.event_log.events()
        )
        coordinator.inject_feedback(
            FeedbackEnvelope(
                workflow_id=coordinator.state.workflow_id,
                kind=FeedbackKind.HUMAN_PROXY_RESPONSE,
                content="focus on the results section",
                task_id="s1",
            )
        )
        thread.join(10)
        assert coordinator.state.phase is Phase.DONE
        resumed_prompt = backend.transcript[1][0]
        assert "Observation: focus on the results section" in resumed_prompt
