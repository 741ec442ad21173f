"""Prompt strategies and output parsers.

Non-iterative strategies make a single call (planning, verification,
plain completion). Iterative strategies loop through a configured stage
sequence — Thought/Action/Observation and its variants — parsing each
model turn into labeled stages, a tool call, a handoff mention, or a
terminal answer.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from agentflow.backend import ChatBackend, ChatRequest
from agentflow.core import Message, Origin, Role
from agentflow.memory import ShortMemory

logger = logging.getLogger(__name__)

DEFAULT_TERMINATION = "FINAL ANSWER:"

OBSERVATION = "Observation"
NEXT = "Next"
ACTION = "Action"


class PromptError(Exception):
    pass


class UnboundVariableError(PromptError):
    pass


class NoJsonFoundError(PromptError):
    pass


class SchemaViolationError(PromptError):
    pass


class MissingStageError(PromptError):
    def __init__(self, stage: str):
        self.stage = stage
        super().__init__(f"required stage {stage!r} missing from response")


class MalformedActionError(PromptError):
    pass


class UnknownAgentError(PromptError):
    def __init__(self, name: str, roster: list[str]):
        self.name = name
        self.roster = list(roster)
        super().__init__(f"unknown agent @{name}; valid agents: {', '.join(roster)}")


class NoMentionError(PromptError):
    pass


class UnparseableVerdictError(PromptError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    def placeholders(self) -> set[str]:
        return set(re.findall(r"\{(\w+)\}", self.body))


@dataclass(frozen=True)
class StageSequence:
    """Ordered stage labels of one iteration; ``loop_from`` is where the
    cycle restarts after an observation."""

    stages: tuple[str, ...]
    loop_from: int = 0

    def __post_init__(self) -> None:
        if self.stages.count(OBSERVATION) > 1:
            raise ValueError("at most one Observation stage per cycle")
        if not 0 <= self.loop_from < len(self.stages):
            raise ValueError("loop_from out of range")

    @property
    def model_stages(self) -> tuple[str, ...]:
        """Stages the model must produce (everything but Observation)."""
        return tuple(s for s in self.stages if s != OBSERVATION)

    @property
    def conversational(self) -> bool:
        return NEXT in self.stages


def react_sequence() -> StageSequence:
    return StageSequence(stages=("Thought", ACTION, OBSERVATION))


def plan_react_sequence() -> StageSequence:
    return StageSequence(stages=("Plan", "Thought", ACTION, OBSERVATION))


def programmable(labels: list[str], loop_from: int = 0) -> StageSequence:
    return StageSequence(stages=tuple(labels), loop_from=loop_from)


def conv_sequence() -> StageSequence:
    """Conversational cycle; Action/Observation are skipped whenever the
    Next stage hands execution to another agent."""
    return StageSequence(
        stages=("Plan", "Task Thought", "Dialog Thought", NEXT, ACTION, OBSERVATION)
    )


# label-only presets for alternative decision cycles
OODA_SEQUENCE = StageSequence(stages=("Observe", "Orient", "Decide", ACTION, OBSERVATION))
PDCA_SEQUENCE = StageSequence(stages=("Plan", "Do", "Check", ACTION, OBSERVATION))


@dataclass(frozen=True)
class ToolCall:
    tool_name: str
    arguments: dict[str, Any]

    def canonical(self) -> str:
        return json.dumps(
            {"tool": self.tool_name, "input": self.arguments}, sort_keys=True
        )


class RefKind(str, Enum):
    SELF = "self"
    NAMED = "named"
    HUMAN_PROXY = "human_proxy"


@dataclass(frozen=True)
class AgentRef:
    kind: RefKind
    name: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind is RefKind.NAMED and not self.name:
            raise ValueError("named agent reference requires a name")

    @classmethod
    def self_ref(cls) -> "AgentRef":
        return cls(kind=RefKind.SELF)

    @classmethod
    def named(cls, name: str) -> "AgentRef":
        return cls(kind=RefKind.NAMED, name=name)

    @classmethod
    def human_proxy(cls) -> "AgentRef":
        return cls(kind=RefKind.HUMAN_PROXY)


@dataclass
class StepOutput:
    """Parsed result of one iterative turn."""

    stages: dict[str, str] = field(default_factory=dict)
    action: Optional[ToolCall] = None
    next_agent: Optional[AgentRef] = None
    terminal: Optional[str] = None

    def __post_init__(self) -> None:
        if self.terminal is not None and self.action is not None:
            raise ValueError("terminal and action are mutually exclusive")


# -- system prompt rendering -------------------------------------------------

DEFAULT_SYSTEM_TEMPLATE = PromptTemplate(
    name="default_system",
    body=(
        "{persona}\n"
        "\n"
        "Objective: {objective}\n"
        "{tools_block}"
        "{agents_block}"
        "{stage_instructions}"
        "{termination_instruction}"
    ),
)

PLANNER_TEMPLATE = PromptTemplate(
    name="planner",
    body=(
        "{persona}\n"
        "\n"
        "Objective: {objective}\n"
        "\n"
        "Decompose the instruction into simple tasks with explicit dependencies,\n"
        "so the tasks form a directed acyclic graph. Respond with a single JSON\n"
        "object of the form\n"
        '{{"tasks": [{{"id": "t1", "description": "...", "depends_on": [], '
        '"unit_hint": null}}]}}\n'
        "and nothing else. Every id must be unique; depends_on may only list\n"
        "ids of other tasks in the same plan.\n"
    ),
)

VERIFIER_TEMPLATE = PromptTemplate(
    name="verifier",
    body=(
        "{persona}\n"
        "\n"
        "Objective: {objective}\n"
        "\n"
        "You will be shown an instruction and a final result. Decide whether the\n"
        "result satisfies the instruction. Respond with a single JSON object:\n"
        '{{"verdict": true, "reason": "..."}} or {{"verdict": false, "reason": "..."}}.\n'
    ),
)


def load_template(path: str, name: Optional[str] = None) -> PromptTemplate:
    """Load a plain-text template file with {variable} placeholders."""
    with open(path, "r", encoding="utf-8") as fh:
        return PromptTemplate(name=name or path, body=fh.read())


def render_system(
    template: PromptTemplate,
    persona: str,
    objective: str,
    tools_block: str = "",
    agents_block: str = "",
    stage_instructions: str = "",
    termination_instruction: str = "",
) -> str:
    """Substitute all template variables; blocks carry their own headers,
    so an empty toolbox leaves no tool section behind."""
    variables = {
        "persona": persona,
        "objective": objective,
        "tools_block": tools_block,
        "agents_block": agents_block,
        "stage_instructions": stage_instructions,
        "termination_instruction": termination_instruction,
    }
    unbound = template.placeholders() - set(variables)
    if unbound:
        raise UnboundVariableError(f"unbound template variables: {sorted(unbound)}")

    def substitute(match: re.Match) -> str:
        return variables[match.group(1)]

    body = template.body.replace("{{", "\x00").replace("}}", "\x01")
    body = re.sub(r"\{(\w+)\}", substitute, body)
    return body.replace("\x00", "{").replace("\x01", "}")


def stage_instructions_for(
    sequence: StageSequence, termination_literal: str = DEFAULT_TERMINATION
) -> str:
    """The stage-format section of an iterative agent's system prompt."""
    lines = [
        "\nRespond every turn using exactly these labeled stages, each starting",
        "on its own line:",
    ]
    for stage in sequence.model_stages:
        if stage == ACTION:
            lines.append('Action: {"tool": "<tool name>", "input": {<arguments>}}')
        elif stage == NEXT:
            lines.append(
                "Next: @Self to continue yourself, @<AgentName> to hand off, "
                "or @HumanProxy to ask the human"
            )
        else:
            lines.append(f"{stage}: <your {stage.lower()}>")
    if OBSERVATION in sequence.stages:
        lines.append("The Observation stage is supplied to you; never write it yourself.")
    if sequence.conversational:
        lines.append("Include the Action stage only when Next is @Self.")
    return "\n".join(lines) + "\n"


def termination_instruction_for(literal: str = DEFAULT_TERMINATION) -> str:
    return (
        f'\nWhen the task is complete, write "{literal}" followed by the final '
        "result instead of taking another action.\n"
    )


# -- non-iterative strategies -------------------------------------------------

def run_basic(
    system: str,
    instruction: str,
    backend: ChatBackend,
    temperature: float = 0.0,
    max_tokens: int = 2048,
) -> str:
    """One-off call: system + instruction in, trimmed completion out."""
    request = ChatRequest(
        messages=[
            Message(role=Role.SYSTEM, content=system),
            Message(role=Role.USER, content=instruction),
        ],
        temperature=temperature,
        max_tokens=max_tokens,
    )
    return backend.chat(request).strip()


# -- parsers -------------------------------------------------------------------

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n?|```")


def extract_first_json(raw: str) -> Any:
    """First JSON object in ``raw``, tolerating prose and code fences."""
    text = _FENCE_RE.sub("", raw)
    decoder = json.JSONDecoder()
    for start in range(len(text)):
        if text[start] != "{":
            continue
        try:
            value, _ = decoder.raw_decode(text[start:])
            return value
        except json.JSONDecodeError:
            continue
    raise NoJsonFoundError("no JSON object found in response")


def parse_plan(raw: str) -> list[dict[str, Any]]:
    """Parse a planner response into plan-interchange task specs."""
    data = extract_first_json(raw)
    if not isinstance(data, dict) or "tasks" not in data:
        raise SchemaViolationError('plan must be an object with a "tasks" array')
    tasks = data["tasks"]
    if not isinstance(tasks, list) or not tasks:
        raise SchemaViolationError('"tasks" must be a non-empty array')
    specs = []
    for index, item in enumerate(tasks):
        if not isinstance(item, dict):
            raise SchemaViolationError(f"tasks[{index}] is not an object")
        task_id = item.get("id")
        if not isinstance(task_id, str) or not task_id.strip():
            raise SchemaViolationError(f"tasks[{index}].id must be a non-empty string")
        description = item.get("description")
        if not isinstance(description, str) or not description.strip():
            raise SchemaViolationError(
                f"tasks[{index}].description must be a non-empty string"
            )
        depends_on = item.get("depends_on", [])
        if not isinstance(depends_on, list) or not all(
            isinstance(d, str) for d in depends_on
        ):
            raise SchemaViolationError(
                f"tasks[{index}].depends_on must be an array of task ids"
            )
        unit_hint = item.get("unit_hint")
        if unit_hint is not None and not isinstance(unit_hint, str):
            raise SchemaViolationError(f"tasks[{index}].unit_hint must be a string or null")
        specs.append(
            {
                "id": task_id,
                "description": description,
                "depends_on": list(depends_on),
                "unit_hint": unit_hint,
            }
        )
    return specs


def parse_verdict(raw: str) -> bool:
    """Boolean verdict from JSON or a bare true/false token.

    Unparseable output is conservatively treated as a false verdict.
    """
    try:
        return parse_verdict_detail(raw)[0]
    except UnparseableVerdictError:
        logger.warning("unparseable verifier output treated as false: %r", raw[:200])
        return False


def parse_verdict_detail(raw: str) -> tuple[bool, str]:
    """Verdict plus the verifier's stated reason (empty when absent)."""
    token = raw.strip().lower()
    if token == "true":
        return True, ""
    if token == "false":
        return False, ""
    try:
        data = extract_first_json(raw)
    except NoJsonFoundError:
        raise UnparseableVerdictError(f"no verdict in {raw[:200]!r}") from None
    if isinstance(data, dict) and isinstance(data.get("verdict"), bool):
        reason = data.get("reason")
        return data["verdict"], reason if isinstance(reason, str) else ""
    raise UnparseableVerdictError(f"no boolean verdict field in {raw[:200]!r}")


def detect_termination(raw: str, literal: str = DEFAULT_TERMINATION) -> Optional[str]:
    """Text after the first occurrence of the termination literal, or None."""
    index = raw.find(literal)
    if index < 0:
        return None
    return raw[index + len(literal):].strip()


def make_observation(tool_result: str, origin: Origin = Origin.TOOL_RESULT) -> Message:
    """Wrap a tool result (or human feedback) as the next Observation."""
    content = tool_result.strip() if tool_result else ""
    if not content:
        content = "Continue"
    return Message(role=Role.USER, content=f"Observation: {content}", origin=origin)


_MENTION_RE = re.compile(r"@([A-Za-z0-9_\-]+)")


def parse_next_mention(stage_text: str, unit_roster: list[str]) -> AgentRef:
    """Resolve the first @-mention in a Next stage against the roster."""
    match = _MENTION_RE.search(stage_text)
    if not match:
        raise NoMentionError(f"no @-mention in Next stage: {stage_text!r}")
    token = match.group(1)
    lowered = token.lower()
    if lowered == "self":
        return AgentRef.self_ref()
    if lowered == "humanproxy":
        return AgentRef.human_proxy()
    for name in unit_roster:
        if name.lower() == lowered:
            return AgentRef.named(name)
    raise UnknownAgentError(token, unit_roster)


def split_stages(raw: str, sequence: StageSequence) -> dict[str, str]:
    """Split a model response into stage-labeled segments.

    Headers are ``<Label>:`` at line start, matched case-insensitively
    against the sequence's model stages; the first occurrence of each
    label wins. Text before the first header is ignored.
    """
    labels = {label.lower(): label for label in sequence.model_stages}
    pattern = re.compile(
        r"^[ \t]*(" + "|".join(re.escape(l) for l in labels) + r")[ \t]*:",
        re.IGNORECASE | re.MULTILINE,
    )
    stages: dict[str, str] = {}
    matches = list(pattern.finditer(raw))
    for current, following in zip(matches, matches[1:] + [None]):
        label = labels[current.group(1).lower()]
        end = following.start() if following else len(raw)
        content = raw[current.end():end].strip()
        if label not in stages:
            stages[label] = content
    return stages


def parse_action(text: str) -> ToolCall:
    try:
        data = extract_first_json(text)
    except NoJsonFoundError as exc:
        raise MalformedActionError(f"action is not valid JSON: {text!r}") from exc
    if not isinstance(data, dict):
        raise MalformedActionError("action JSON must be an object")
    tool = data.get("tool")
    arguments = data.get("input", {})
    if not isinstance(tool, str) or not tool:
        raise MalformedActionError('action JSON needs a "tool" name')
    if not isinstance(arguments, dict):
        raise MalformedActionError('action "input" must be a JSON object')
    return ToolCall(tool_name=tool, arguments=arguments)


def parse_step(
    raw: str,
    sequence: StageSequence,
    termination_literal: str = DEFAULT_TERMINATION,
    roster: Optional[list[str]] = None,
    lenient_next: bool = False,
) -> StepOutput:
    """Parse one raw model turn into a StepOutput.

    Termination is detected before stage parsing; afterwards every model
    stage is required except Action, which conversational sequences only
    require when Next resolves to @Self.
    """
    terminal = detect_termination(raw, termination_literal)
    if terminal is not None:
        head = raw[: raw.find(termination_literal)]
        stages = split_stages(head, sequence)
        return StepOutput(stages=stages, terminal=terminal)

    stages = split_stages(raw, sequence)

    next_agent: Optional[AgentRef] = None
    if sequence.conversational:
        if NEXT not in stages:
            raise MissingStageError(NEXT)
        try:
            next_agent = parse_next_mention(stages[NEXT], roster or [])
        except (UnknownAgentError, NoMentionError):
            if not lenient_next:
                raise
            next_agent = AgentRef.self_ref()

    action_required = ACTION in sequence.model_stages and (
        not sequence.conversational or next_agent == AgentRef.self_ref()
    )
    for stage in sequence.model_stages:
        if stage == ACTION:
            if action_required and stage not in stages:
                raise MissingStageError(ACTION)
        elif stage not in stages:
            raise MissingStageError(stage)

    action: Optional[ToolCall] = None
    if action_required:
        action = parse_action(stages[ACTION])
        stages[ACTION] = action.canonical()
    elif sequence.conversational and ACTION in stages:
        # handed off: Action is skipped even if the model emitted one
        del stages[ACTION]

    return StepOutput(stages=stages, action=action, next_agent=next_agent)


def render_step(
    step: StepOutput,
    sequence: StageSequence,
    termination_literal: str = DEFAULT_TERMINATION,
) -> str:
    """Normalized assistant text for a StepOutput (the revised message)."""
    lines = [
        f"{label}: {step.stages[label]}"
        for label in sequence.model_stages
        if label in step.stages
    ]
    if step.terminal is not None:
        lines.append(f"{termination_literal} {step.terminal}".rstrip())
    return "\n".join(lines)


def _corrective_text(error: PromptError) -> str:
    if isinstance(error, MissingStageError):
        return (
            f"Your previous response was missing the required {error.stage!r} stage. "
            "Respond again using the exact stage format from the system message."
        )
    if isinstance(error, MalformedActionError):
        return (
            "Your previous Action stage was not a valid JSON object of the form "
            '{"tool": "<name>", "input": {...}}. Respond again with a well-formed '
            "Action."
        )
    if isinstance(error, UnknownAgentError):
        return (
            f"@{error.name} is not an available agent. Valid mentions are: "
            + ", ".join(f"@{n}" for n in error.roster + ["Self", "HumanProxy"])
            + ". Respond again."
        )
    if isinstance(error, NoMentionError):
        return (
            "Your Next stage did not mention any agent. Use @Self, @HumanProxy, "
            "or @<AgentName>. Respond again."
        )
    return "Your previous response did not follow the required format. Respond again."


def step_iterative(
    sequence: StageSequence,
    short_memory: ShortMemory,
    backend: ChatBackend,
    termination_literal: str = DEFAULT_TERMINATION,
    roster: Optional[list[str]] = None,
    temperature: float = 0.2,
    max_tokens: int = 2048,
) -> StepOutput:
    """One iteration of an iterative strategy.

    Makes a single chat call, parses the turn, and appends the normalized
    assistant message to short memory. Each defect class gets exactly one
    corrective re-prompt; a second structural failure propagates (the task
    fails), while a second mention failure falls back to @Self.
    """
    repaired: set[type] = set()
    for _ in range(1 + 4):  # one initial try plus one repair per defect class
        mention_repaired = bool({UnknownAgentError, NoMentionError} & repaired)
        request = ChatRequest(
            messages=short_memory.messages,
            temperature=temperature,
            max_tokens=max_tokens,
        )
        raw = backend.chat(request)
        try:
            step = parse_step(
                raw,
                sequence,
                termination_literal=termination_literal,
                roster=roster,
                lenient_next=mention_repaired,
            )
        except (MissingStageError, MalformedActionError, UnknownAgentError, NoMentionError) as exc:
            if raw.strip():
                short_memory.append(
                    Message(role=Role.ASSISTANT, content=raw, origin=Origin.MODEL)
                )
            if type(exc) in repaired:
                raise
            repaired.add(type(exc))
            short_memory.append(
                Message(role=Role.USER, content=_corrective_text(exc), origin=Origin.FRAMEWORK)
            )
            continue
        revised = render_step(step, sequence, termination_literal)
        short_memory.append(
            Message(
                role=Role.ASSISTANT,
                content=revised,
                stage_tags=list(step.stages) or None,
                origin=Origin.MODEL,
            )
        )
        return step
    raise AssertionError("unreachable")
