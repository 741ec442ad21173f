"""Tool abstraction, toolbox, and toolbox refiners.

Tools are self-describing: each carries a parameter schema rendered
directly into the agent's system prompt (no provider function-calling
API). Refiners narrow a toolbox to the subset relevant for one task —
identity (everything), hierarchical (greedy tree descent), or semantic
(top-k by description similarity).
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional

from agentflow.backend import Embedder, cosine, embed
from agentflow.prompts import ToolCall

TYPE_TAGS = ("string", "int", "real", "bool", "list", "object")

DEFAULT_RESULT_CAP = 4000


class ToolboxError(Exception):
    pass


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type_tag: str
    required: bool = True
    doc: str = ""

    def __post_init__(self) -> None:
        if self.type_tag not in TYPE_TAGS:
            raise ValueError(f"unknown type tag {self.type_tag!r}")


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    input_schema: tuple[ParamSpec, ...] = ()
    output_doc: str = ""
    category_path: tuple[str, ...] = ()


ToolHandler = Callable[[dict[str, Any]], Any]


@dataclass
class Tool:
    spec: ToolSpec
    handler: ToolHandler
    exclusive: bool = False  # exclusive handlers serialize behind a lock
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


def tool_schema(spec: ToolSpec) -> str:
    """Deterministic prompt block for one tool."""
    lines = [f"{spec.name}: {spec.description}"]
    if spec.input_schema:
        lines.append("  parameters:")
        for param in spec.input_schema:
            requirement = "required" if param.required else "optional"
            doc = f": {param.doc}" if param.doc else ""
            lines.append(f"    {param.name} ({param.type_tag}, {requirement}){doc}")
    else:
        lines.append("  parameters: (no parameters)")
    if spec.output_doc:
        lines.append(f"  returns: {spec.output_doc}")
    return "\n".join(lines)


@dataclass
class CategoryNode:
    label: str
    description: str = ""
    children: list["CategoryNode"] = field(default_factory=list)

    def child(self, label: str) -> Optional["CategoryNode"]:
        for node in self.children:
            if node.label == label:
                return node
        return None


class Toolbox:
    """Named tool registry with an optional category hierarchy."""

    def __init__(self, hierarchy: Optional[CategoryNode] = None):
        self._tools: dict[str, Tool] = {}
        self._order: list[str] = []
        self.hierarchy = hierarchy or CategoryNode(label="root")

    def register(
        self,
        spec: ToolSpec,
        handler: ToolHandler,
        exclusive: bool = False,
    ) -> None:
        if spec.name in self._tools:
            raise ToolboxError(f"duplicate tool name {spec.name!r}")
        if spec.category_path and not self._category_exists(spec.category_path):
            raise ToolboxError(
                f"tool {spec.name!r} references unknown category {'/'.join(spec.category_path)}"
            )
        self._tools[spec.name] = Tool(spec=spec, handler=handler, exclusive=exclusive)
        self._order.append(spec.name)

    def _category_exists(self, path: tuple[str, ...]) -> bool:
        node = self.hierarchy
        for label in path:
            node = node.child(label)
            if node is None:
                return False
        return True

    def get(self, name: str) -> Optional[Tool]:
        return self._tools.get(name)

    def specs(self) -> list[ToolSpec]:
        """All specs in registration order."""
        return [self._tools[name].spec for name in self._order]

    def names(self) -> list[str]:
        return list(self._order)

    def __len__(self) -> int:
        return len(self._order)


class RefinerKind(str, Enum):
    IDENTITY = "identity"
    HIERARCHICAL = "hierarchical"
    SEMANTIC = "semantic"


@dataclass(frozen=True)
class RefinerConfig:
    kind: RefinerKind = RefinerKind.IDENTITY
    k: int = 5
    min_similarity: float = 0.0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")


def refine(
    toolbox: Toolbox,
    task_description: str,
    config: RefinerConfig,
    embedder: Embedder = embed,
) -> list[ToolSpec]:
    """Narrow the toolbox to the subset relevant for one task.

    An empty result is legal and yields a tool-less prompt.
    """
    if config.kind is RefinerKind.IDENTITY:
        return toolbox.specs()
    if config.kind is RefinerKind.SEMANTIC:
        task_vector = embedder(task_description)
        scored = [
            (spec, cosine(task_vector, embedder(spec.description)))
            for spec in toolbox.specs()
        ]
        scored.sort(key=lambda pair: -pair[1])
        return [spec for spec, score in scored[: config.k] if score >= config.min_similarity]
    if config.kind is RefinerKind.HIERARCHICAL:
        return _refine_hierarchical(toolbox, task_description, embedder)
    raise ValueError(f"unknown refiner kind {config.kind}")


def _refine_hierarchical(
    toolbox: Toolbox, task_description: str, embedder: Embedder
) -> list[ToolSpec]:
    """Greedy best-branch descent over the category tree.

    Each level scores its children by cosine(label + description, task)
    and descends the best one (ties by registration order). Tools at the
    chosen node plus uncategorized tools come back in registration order.
    """
    task_vector = embedder(task_description)
    node = toolbox.hierarchy
    path: tuple[str, ...] = ()
    while node.children:
        best_score = None
        best_child = None
        for child in node.children:
            score = cosine(task_vector, embedder(f"{child.label} {child.description}"))
            if best_score is None or score > best_score:
                best_score, best_child = score, child
        node = best_child
        path = path + (node.label,)
    chosen = [
        spec
        for spec in toolbox.specs()
        if spec.category_path == path or not spec.category_path
    ]
    return chosen


def invoke(
    toolbox: Toolbox,
    call: ToolCall,
    result_cap: int = DEFAULT_RESULT_CAP,
) -> str:
    """Validate and execute a tool call, returning observation text.

    Every failure mode — unknown tool, bad arguments, handler exception —
    comes back as an "Error: ..." observation so the agent loop can
    self-correct instead of dying.
    """
    tool = toolbox.get(call.tool_name)
    if tool is None:
        available = ", ".join(toolbox.names()) or "(none)"
        return f"Error: unknown tool '{call.tool_name}'; available: {available}"
    error = _validate_arguments(tool.spec, call.arguments)
    if error:
        return f"Error: {error}"
    try:
        if tool.exclusive:
            with tool._lock:
                result = tool.handler(dict(call.arguments))
        else:
            result = tool.handler(dict(call.arguments))
    except Exception as exc:  # noqa: BLE001 - handler failures become observations
        return f"Error: tool '{call.tool_name}' failed: {exc}"
    return _serialize_result(result, result_cap)


_TYPE_CHECKS: dict[str, Callable[[Any], bool]] = {
    "string": lambda v: isinstance(v, str),
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "real": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "bool": lambda v: isinstance(v, bool),
    "list": lambda v: isinstance(v, list),
    "object": lambda v: isinstance(v, dict),
}

_COERCIONS: dict[str, Callable[[Any], Any]] = {
    "int": lambda v: int(v) if isinstance(v, str) and v.lstrip("-").isdigit() else v,
    "real": lambda v: float(v) if isinstance(v, str) and _is_real(v) else v,
    "string": lambda v: str(v) if isinstance(v, (int, float)) else v,
}


def _is_real(value: str) -> bool:
    try:
        float(value)
        return True
    except ValueError:
        return False


def _validate_arguments(spec: ToolSpec, arguments: dict[str, Any]) -> Optional[str]:
    known = {p.name for p in spec.input_schema}
    for name in arguments:
        if name not in known:
            return f"unexpected parameter '{name}' for tool '{spec.name}'"
    for param in spec.input_schema:
        if param.name not in arguments:
            if param.required:
                return f"missing required parameter '{param.name}'"
            continue
        value = arguments[param.name]
        coerce = _COERCIONS.get(param.type_tag)
        if coerce is not None:
            value = coerce(value)
            arguments[param.name] = value
        if not _TYPE_CHECKS[param.type_tag](value):
            return (
                f"parameter '{param.name}' expected {param.type_tag}, "
                f"got {type(value).__name__}"
            )
    return None


def _serialize_result(result: Any, cap: int) -> str:
    if result is None:
        text = ""
    elif isinstance(result, str):
        text = result
    else:
        text = json.dumps(result, ensure_ascii=False, sort_keys=True)
    if len(text) > cap:
        text = text[:cap] + " [truncated]"
    return text


def tools_block(specs: list[ToolSpec]) -> str:
    """System prompt section for a refined tool set; empty set, no section."""
    if not specs:
        return ""
    blocks = "\n\n".join(tool_schema(spec) for spec in specs)
    return (
        "\nYou have access to the following tools:\n\n"
        + blocks
        + "\n\nInvoke a tool with an Action stage whose body is JSON: "
        '{"tool": "<name>", "input": {<arguments>}}.\n'
    )
