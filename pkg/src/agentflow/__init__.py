"""agentflow: a multi-agent workflow engine.

Instructions are decomposed into a task DAG, tasks are executed by agent
units running iterative prompt strategies with tools and layered memory,
and an independent verifier decides whether the run met the instruction,
triggering replanning when it did not.
"""

from agentflow.agents import (
    AgentSpec,
    AgentUnit,
    ExecutionServices,
    ExecutionTrace,
    Executor,
    FeedbackHub,
    MatcherConfig,
    MatcherKind,
    Topology,
    match_iterative,
    match_mention,
    match_semantic,
    match_unit,
)
from agentflow.backend import (
    ChatBackend,
    ChatRequest,
    EmbeddingVector,
    HttpBackend,
    HttpBackendConfig,
    ScriptEntry,
    ScriptedBackend,
    cosine,
    embed,
)
from agentflow.coordinator import (
    Coordinator,
    FeedbackEnvelope,
    FeedbackKind,
    WorkflowConfig,
    config_fingerprint,
    resume,
    run_workflow,
)
from agentflow.core import (
    EventKind,
    EventLog,
    Message,
    Origin,
    Phase,
    Role,
    Task,
    TaskQueue,
    TaskStatus,
    WorkflowEvent,
    WorkflowState,
    build_queue,
)
from agentflow.memory import Episode, EpisodeScope, EpisodeStore, ShortMemory, make_episode
from agentflow.prompts import (
    AgentRef,
    StageSequence,
    StepOutput,
    ToolCall,
    conv_sequence,
    detect_termination,
    make_observation,
    parse_next_mention,
    parse_plan,
    parse_verdict,
    plan_react_sequence,
    programmable,
    react_sequence,
    render_system,
    run_basic,
    step_iterative,
)
from agentflow.tools import (
    ParamSpec,
    RefinerConfig,
    RefinerKind,
    Toolbox,
    ToolSpec,
    invoke,
    refine,
    tool_schema,
)

__all__ = [
    "AgentRef",
    "AgentSpec",
    "AgentUnit",
    "ChatBackend",
    "ChatRequest",
    "Coordinator",
    "EmbeddingVector",
    "Episode",
    "EpisodeScope",
    "EpisodeStore",
    "EventKind",
    "EventLog",
    "ExecutionServices",
    "ExecutionTrace",
    "Executor",
    "FeedbackEnvelope",
    "FeedbackHub",
    "FeedbackKind",
    "HttpBackend",
    "HttpBackendConfig",
    "MatcherConfig",
    "MatcherKind",
    "Message",
    "Origin",
    "ParamSpec",
    "Phase",
    "RefinerConfig",
    "RefinerKind",
    "Role",
    "ScriptEntry",
    "ScriptedBackend",
    "ShortMemory",
    "StageSequence",
    "StepOutput",
    "Task",
    "TaskQueue",
    "TaskStatus",
    "ToolCall",
    "ToolSpec",
    "Toolbox",
    "Topology",
    "WorkflowConfig",
    "WorkflowEvent",
    "WorkflowState",
    "build_queue",
    "config_fingerprint",
    "conv_sequence",
    "cosine",
    "detect_termination",
    "embed",
    "invoke",
    "make_episode",
    "make_observation",
    "match_iterative",
    "match_mention",
    "match_semantic",
    "match_unit",
    "parse_next_mention",
    "parse_plan",
    "parse_verdict",
    "plan_react_sequence",
    "programmable",
    "react_sequence",
    "refine",
    "render_system",
    "resume",
    "run_basic",
    "run_workflow",
    "step_iterative",
    "tool_schema",
]

__version__ = "0.1.0"
