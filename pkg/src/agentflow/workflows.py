"""The three shipped example workflows and their scripted fixtures.

Each example bundles a config builder, a default instruction, and the
fixture that drives it offline: a question-answering run over a small
document corpus, an actor/critic document edit with a predefined linear
plan, and a three-agent coding task with mention routing. Together they
double as the end-to-end integration suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from agentflow.agents import AgentSpec, AgentUnit, MatcherConfig, MatcherKind, Topology
from agentflow.backend import ScriptEntry
from agentflow.coordinator import WorkflowConfig
from agentflow.prompts import conv_sequence, programmable, react_sequence
from agentflow.toolkits import (
    CorpusIndex,
    register_code_execution,
    register_file_io,
    register_semantic_search,
    register_web_search,
)
from agentflow.tools import Toolbox


@dataclass
class ExampleWorkflow:
    name: str
    instruction: str
    build_config: Callable[[Path], WorkflowConfig]
    build_fixture: Callable[[], list[ScriptEntry]]


def _entry(expect: str | None, response: str) -> ScriptEntry:
    return ScriptEntry(expect=expect, response=response)


# -- question answering over a document corpus ---------------------------------

RAG_INSTRUCTION = (
    "How tall is the Meridian observatory tower, and which primary instrument "
    "does it host?"
)

RAG_CORPUS: dict[str, str] = {
    "history.txt": (
        "The Meridian observatory was proposed in 1951 by a consortium of "
        "coastal universities.\n\nConstruction began only a decade later, after "
        "the ridge road was completed."
    ),
    "tower.txt": (
        "The observatory tower rises 87 meters above the ridge line, making it "
        "the tallest structure in the valley.\n\nIts concrete core was poured "
        "in a single continuous operation."
    ),
    "instrument.txt": (
        "The Aurora spectrograph is the primary instrument installed at "
        "Meridian.\n\nIt samples the night sky in four bands simultaneously."
    ),
    "staff.txt": (
        "Around forty technicians and twelve astronomers work on site during "
        "the observing season."
    ),
    "climate.txt": (
        "Cloud cover statistics favour the winter months, when the marine "
        "layer settles below the ridge."
    ),
    "funding.txt": (
        "Operating funds come from a trust established by the original "
        "consortium, supplemented by instrument time fees."
    ),
    "access.txt": (
        "Visitors reach the site by a switchback road; heavy equipment arrives "
        "by cable lift."
    ),
    "archive.txt": (
        "Observation archives older than five years are mirrored to three "
        "partner institutions."
    ),
    "outreach.txt": (
        "A public viewing night is held on the first Saturday of each month, "
        "weather permitting."
    ),
    "future.txt": (
        "A proposal to add an interferometer array on the north slope is under "
        "review."
    ),
}


def write_rag_corpus(directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    for filename, text in RAG_CORPUS.items():
        (directory / filename).write_text(text, encoding="utf-8")
    return directory


def build_rag_config(base_dir: Path) -> WorkflowConfig:
    corpus_dir = write_rag_corpus(base_dir / "corpus")
    index = CorpusIndex.ingest(str(corpus_dir))
    toolbox = Toolbox()
    register_semantic_search(toolbox, index)
    assistant = AgentSpec(
        name="Assistant",
        persona="You answer questions precisely using the document corpus.",
        strategy=react_sequence(),
        toolbox=toolbox,
    )
    unit = AgentUnit(
        name="qa",
        agents=[assistant],
        topology=Topology.INDEPENDENT,
        matcher=MatcherConfig(kind=MatcherKind.SEMANTIC),
    )
    planner = AgentSpec(
        name="Planner",
        persona="You decompose complex questions into simple sub-questions.",
        temperature=0.0,
    )
    verifier = AgentSpec(
        name="Verifier",
        persona="You judge strictly whether an answer addresses the question.",
        temperature=0.0,
    )
    return WorkflowConfig(
        name="rag-qa",
        planner=planner,
        verifier=verifier,
        units=[unit],
        snapshot_dir=str(base_dir / "snapshots"),
    )


def build_rag_fixture() -> list[ScriptEntry]:
    plan = {
        "tasks": [
            {
                "id": "t1",
                "description": "Find the height of the Meridian observatory tower.",
                "depends_on": [],
            },
            {
                "id": "t2",
                "description": "Find the primary instrument installed at the Meridian observatory.",
                "depends_on": [],
            },
            {
                "id": "t3",
                "description": "Combine the findings into one answer about tower height and instrument.",
                "depends_on": ["t1", "t2"],
            },
        ]
    }
    return [
        _entry("Decompose this instruction", json.dumps(plan)),
        _entry(
            "Find the height of the Meridian observatory tower.",
            'Thought: search for the tower height\n'
            'Action: {"tool": "semantic_search", "input": {"query": "height of the observatory tower in meters"}}',
        ),
        _entry(
            "rises 87 meters",
            "Thought: the corpus states the height\nFINAL ANSWER: The tower is 87 meters tall.",
        ),
        _entry(
            "Find the primary instrument installed at the Meridian observatory.",
            'Thought: search for the instrument\n'
            'Action: {"tool": "semantic_search", "input": {"query": "primary instrument installed at Meridian"}}',
        ),
        _entry(
            "Aurora spectrograph",
            "Thought: found the instrument\nFINAL ANSWER: It hosts the Aurora spectrograph.",
        ),
        _entry(
            "Results of prerequisite tasks",
            "Thought: both findings are present\n"
            "FINAL ANSWER: The Meridian observatory tower stands 87 meters tall and "
            "hosts the Aurora spectrograph as its primary instrument.",
        ),
        _entry(
            "Final result:",
            '{"verdict": true, "reason": "both parts of the question are answered"}',
        ),
    ]


# -- actor/critic document editing ----------------------------------------------

EDITING_RULES = [
    "Spell out small numerals as words.",
    "Rewrite passive constructions in the active voice.",
    "Replace the word 'project' with 'program' throughout.",
]

ORIGINAL_DOCUMENT = (
    "The project was reviewed by 3 committees. "
    "A final report was written by the team."
)

ACTOR_CRITIC_INSTRUCTION = (
    "Edit the document so it follows all the editing rules:\n"
    + "\n".join(f"{i + 1}. {rule}" for i, rule in enumerate(EDITING_RULES))
    + f"\n\nDocument:\n{ORIGINAL_DOCUMENT}"
)

DOC_V1 = (
    "The project was reviewed by three committees. "
    "A final report was written by the team."
)
DOC_V2 = (
    "Three committees reviewed the project. The team wrote a final report."
)
DOC_V3 = (
    "Three committees reviewed the program. The team wrote a final report."
)


def actor_critic_plan(rules: list[str], document: str) -> list[dict]:
    """Rules become tasks with a linear dependency, executed one after another."""
    specs = []
    for i, rule in enumerate(rules):
        description = f"Apply editing rule {i + 1} to the document: {rule}"
        if i == 0:
            description += f"\nOriginal document:\n{document}"
        else:
            description += "\nStart from the prerequisite task's document version."
        specs.append(
            {
                "id": f"r{i + 1}",
                "description": description,
                "depends_on": [f"r{i}"] if i else [],
            }
        )
    return specs


def build_actor_critic_config(base_dir: Path) -> WorkflowConfig:
    editor = AgentSpec(
        name="Editor",
        persona="You edit documents to apply a given editing rule faithfully.",
        strategy=programmable(["Revision"]),
        may_terminate=False,
    )
    critic = AgentSpec(
        name="Critic",
        persona="You check whether the editing rule has been fully applied.",
        strategy=programmable(["Critique"]),
    )
    unit = AgentUnit(
        name="editing",
        agents=[editor, critic],
        topology=Topology.SEQUENTIAL,
        matcher=MatcherConfig(kind=MatcherKind.ITERATIVE),
        sequence=["Editor", "Critic"],
    )
    verifier = AgentSpec(
        name="Verifier",
        persona="You verify that every editing rule was applied to the document.",
        temperature=0.0,
    )
    return WorkflowConfig(
        name="actor-critic",
        verifier=verifier,
        units=[unit],
        predefined_plan=actor_critic_plan(EDITING_RULES, ORIGINAL_DOCUMENT),
        snapshot_dir=str(base_dir / "snapshots"),
    )


def build_actor_critic_fixture() -> list[ScriptEntry]:
    return [
        # rule 1: two full editor/critic rounds before the critic is satisfied
        _entry("Apply editing rule 1", f"Revision: {DOC_V1[:-1]} ."),
        _entry(
            "From Editor",
            "Critique: the numeral is spelled out, but remove the stray space before the period.",
        ),
        _entry("From Critic", f"Revision: {DOC_V1}"),
        _entry(
            "From Editor",
            f"Critique: the rule is fully applied. No further edits required.\nFINAL ANSWER: {DOC_V1}",
        ),
        # rule 2: one round
        _entry("Apply editing rule 2", f"Revision: {DOC_V2}"),
        _entry(
            "From Editor",
            f"Critique: active voice throughout. No further edits required.\nFINAL ANSWER: {DOC_V2}",
        ),
        # rule 3: one round
        _entry("Apply editing rule 3", f"Revision: {DOC_V3}"),
        _entry(
            "From Editor",
            f"Critique: replacement complete. No further edits required.\nFINAL ANSWER: {DOC_V3}",
        ),
        _entry(
            "Final result:",
            '{"verdict": true, "reason": "all three rules are applied"}',
        ),
    ]


# -- joint coding with mention routing -------------------------------------------

CODING_INSTRUCTION = (
    "Create a python file greet.py with a greet(name) function and verify it runs."
)

GREET_SOURCE = 'def greet(name):\n    return f"hello, {name}"\n'

CODING_TASK_DESCRIPTION = (
    "Design the module layout, then implement and test greet.py with a "
    "greet(name) function."
)


def build_coding_config(base_dir: Path) -> WorkflowConfig:
    workspace = base_dir / "workspace"
    workspace.mkdir(parents=True, exist_ok=True)

    coder_tools = Toolbox()
    register_file_io(coder_tools, str(workspace))
    architect_tools = Toolbox()
    register_web_search(
        architect_tools,
        fixtures={"greeting": "Common practice: a pure function returning the greeting string."},
    )
    tester_tools = Toolbox()
    register_code_execution(
        tester_tools,
        fixtures={"from greet import greet": "hello, world"},
    )

    coder = AgentSpec(
        name="Coder",
        persona="You implement python code and write the files.",
        strategy=conv_sequence(),
        toolbox=coder_tools,
    )
    architect = AgentSpec(
        name="Architect",
        persona="You design the module layout and research approaches before any implementation.",
        strategy=conv_sequence(),
        toolbox=architect_tools,
    )
    tester = AgentSpec(
        name="Tester",
        persona="You test code by executing it and reporting the output.",
        strategy=conv_sequence(),
        toolbox=tester_tools,
    )
    unit = AgentUnit(
        name="dev",
        agents=[coder, architect, tester],
        topology=Topology.JOINT,
        matcher=MatcherConfig(
            kind=MatcherKind.COMPOSITE,
            components=[MatcherKind.MENTION, MatcherKind.SEMANTIC],
        ),
    )
    planner = AgentSpec(
        name="Planner",
        persona="You decompose development requests into concrete coding tasks.",
        temperature=0.0,
    )
    verifier = AgentSpec(
        name="Verifier",
        persona="You verify that the requested software exists and was tested.",
        temperature=0.0,
    )
    return WorkflowConfig(
        name="coding-joint",
        planner=planner,
        verifier=verifier,
        units=[unit],
        snapshot_dir=str(base_dir / "snapshots"),
    )


def build_coding_fixture() -> list[ScriptEntry]:
    plan = {
        "tasks": [
            {"id": "c1", "description": CODING_TASK_DESCRIPTION, "depends_on": []}
        ]
    }
    write_action = json.dumps(
        {"tool": "file_io", "input": {"mode": "write", "path": "greet.py", "content": GREET_SOURCE}}
    )
    test_action = json.dumps(
        {"tool": "code_execution", "input": {"source": "from greet import greet\nprint(greet('world'))"}}
    )
    return [
        _entry("Decompose this instruction", json.dumps(plan)),
        # Architect starts (semantic match), hands the design to the coder
        _entry(
            CODING_TASK_DESCRIPTION,
            "Plan: design first, then implement, then test\n"
            "Task Thought: a single module with one pure function is enough\n"
            "Dialog Thought: the layout is one file greet.py; the coder should implement it\n"
            "Next: @Coder",
        ),
        # Coder writes the file itself
        _entry(
            "From Architect",
            "Plan: implement greet.py\n"
            "Task Thought: write the function exactly as designed\n"
            "Dialog Thought: I will write the file now\n"
            "Next: @Self\n"
            f"Action: {write_action}",
        ),
        # Coder hands off to the tester after the write confirmation
        _entry(
            "wrote 45 characters to greet.py",
            "Plan: get the implementation verified\n"
            "Task Thought: the file exists now\n"
            "Dialog Thought: the tester should run it\n"
            "Next: @Tester",
        ),
        # Tester executes the code itself
        _entry(
            "From Coder",
            "Plan: run the function\n"
            "Task Thought: import and call greet\n"
            "Dialog Thought: executing now\n"
            "Next: @Self\n"
            f"Action: {test_action}",
        ),
        # Tester reports back to the coder
        _entry(
            "hello, world",
            "Plan: report the result\n"
            "Task Thought: the output matches expectations\n"
            "Dialog Thought: tests pass, back to the coder to close out\n"
            "Next: @Coder",
        ),
        # Coder closes the task
        _entry(
            "From Tester",
            "Plan: close\n"
            "Task Thought: implementation and test are complete\n"
            "Dialog Thought: nothing left to coordinate\n"
            "FINAL ANSWER: greet.py was implemented and tested; running it prints hello, world.",
        ),
        _entry(
            "Final result:",
            '{"verdict": true, "reason": "the file exists and the test passed"}',
        ),
    ]


# -- service demos: a wide DAG for the console and a human-in-the-loop run ------

DAG_DEMO_INSTRUCTION = "Compute all eight parts of the survey."


def dag_demo_plan() -> list[dict]:
    """Eight tasks; task 8 depends directly on 6 and 7, and 1 precedes 7
    only indirectly."""
    edges = {
        "1": [],
        "2": ["1"],
        "3": ["1"],
        "4": ["2"],
        "5": ["3"],
        "6": ["4"],
        "7": ["5"],
        "8": ["6", "7"],
    }
    return [
        {"id": tid, "description": f"Compute part {tid} of the survey.", "depends_on": deps}
        for tid, deps in edges.items()
    ]


def build_dag_demo_config(base_dir: Path) -> WorkflowConfig:
    solo = AgentSpec(
        name="Solo",
        persona="You compute survey parts.",
        strategy=react_sequence(),
    )
    unit = AgentUnit(name="survey", agents=[solo], topology=Topology.INDEPENDENT)
    verifier = AgentSpec(
        name="Verifier", persona="You verify survey completeness.", temperature=0.0
    )
    return WorkflowConfig(
        name="dag-demo",
        verifier=verifier,
        units=[unit],
        predefined_plan=dag_demo_plan(),
        snapshot_dir=str(base_dir / "snapshots"),
    )


def build_dag_demo_fixture() -> list[ScriptEntry]:
    entries = [
        _entry(f"Compute part {tid}", f"Thought: computing\nFINAL ANSWER: part {tid} done")
        for tid in ("1", "2", "3", "4", "5", "6", "7", "8")
    ]
    entries.append(_entry("Final result:", '{"verdict": true, "reason": "all parts"}'))
    return entries


HUMAN_LOOP_INSTRUCTION = "Summarize the findings, asking the human which section matters."


def build_human_loop_config(base_dir: Path) -> WorkflowConfig:
    agent = AgentSpec(
        name="Summarizer",
        persona="You summarize findings, deferring scope choices to the human.",
        strategy=conv_sequence(),
    )
    unit = AgentUnit(name="summary", agents=[agent], topology=Topology.INDEPENDENT)
    verifier = AgentSpec(
        name="Verifier", persona="You verify the summary addresses the request.", temperature=0.0
    )
    return WorkflowConfig(
        name="human-loop",
        verifier=verifier,
        units=[unit],
        predefined_plan=[
            {"id": "s1", "description": "Summarize the findings for the chosen section.", "depends_on": []}
        ],
        snapshot_dir=str(base_dir / "snapshots"),
    )


def build_human_loop_fixture() -> list[ScriptEntry]:
    return [
        _entry(
            "Summarize the findings",
            "Plan: ask first, then summarize\n"
            "Task Thought: the scope is ambiguous\n"
            "Dialog Thought: which section should the summary focus on?\n"
            "Next: @HumanProxy",
        ),
        _entry(
            "Observation:",
            "Plan: summarize\n"
            "Task Thought: scope is settled\n"
            "Dialog Thought: done asking\n"
            "FINAL ANSWER: Summary focused on the requested section.",
        ),
        _entry("Final result:", '{"verdict": true, "reason": "summary delivered"}'),
    ]


EXAMPLES: dict[str, ExampleWorkflow] = {
    "rag-qa": ExampleWorkflow(
        name="rag-qa",
        instruction=RAG_INSTRUCTION,
        build_config=build_rag_config,
        build_fixture=build_rag_fixture,
    ),
    "actor-critic": ExampleWorkflow(
        name="actor-critic",
        instruction=ACTOR_CRITIC_INSTRUCTION,
        build_config=build_actor_critic_config,
        build_fixture=build_actor_critic_fixture,
    ),
    "coding-joint": ExampleWorkflow(
        name="coding-joint",
        instruction=CODING_INSTRUCTION,
        build_config=build_coding_config,
        build_fixture=build_coding_fixture,
    ),
    "dag-demo": ExampleWorkflow(
        name="dag-demo",
        instruction=DAG_DEMO_INSTRUCTION,
        build_config=build_dag_demo_config,
        build_fixture=build_dag_demo_fixture,
    ),
    "human-loop": ExampleWorkflow(
        name="human-loop",
        instruction=HUMAN_LOOP_INSTRUCTION,
        build_config=build_human_loop_config,
        build_fixture=build_human_loop_fixture,
    ),
}
