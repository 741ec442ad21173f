"""Built-in tools for the shipped example workflows.

semantic_search runs over a paragraph-chunked document corpus indexed at
startup; file_io is jailed to a workspace root; web_search and
code_execution are fixture-backed for offline runs (code_execution falls
back to a sandboxed subprocess when no fixtures are given).
"""

from __future__ import annotations

import json
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from agentflow.backend import Embedder, EmbeddingVector, cosine, embed
from agentflow.tools import ParamSpec, Toolbox, ToolSpec


class EmptyIndexError(Exception):
    pass


@dataclass
class Passage:
    chunk_id: str
    source: str
    text: str
    vector: EmbeddingVector


class CorpusIndex:
    """Paragraph-level vector index over a directory of text documents."""

    def __init__(self, passages: list[Passage], embedder: Embedder = embed):
        self.passages = passages
        self.embedder = embedder

    @classmethod
    def ingest(cls, corpus_dir: str, embedder: Embedder = embed) -> "CorpusIndex":
        passages: list[Passage] = []
        root = Path(corpus_dir)
        for path in sorted(root.glob("**/*")):
            if path.suffix.lower() not in (".txt", ".md") or not path.is_file():
                continue
            source = str(path.relative_to(root))
            text = path.read_text(encoding="utf-8")
            for i, chunk in enumerate(_paragraphs(text)):
                passages.append(
                    Passage(
                        chunk_id=f"{source}#p{i}",
                        source=source,
                        text=chunk,
                        vector=embedder(chunk),
                    )
                )
        return cls(passages, embedder=embedder)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for passage in self.passages:
                fh.write(
                    json.dumps(
                        {
                            "chunk_id": passage.chunk_id,
                            "source": passage.source,
                            "text": passage.text,
                            "vector": passage.vector.values,
                        }
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, path: str, embedder: Embedder = embed) -> "CorpusIndex":
        passages = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                data = json.loads(line)
                passages.append(
                    Passage(
                        chunk_id=data["chunk_id"],
                        source=data["source"],
                        text=data["text"],
                        vector=EmbeddingVector(values=list(data["vector"])),
                    )
                )
        return cls(passages, embedder=embedder)

    def search(self, query: str, k: int = 3) -> list[tuple[Passage, float]]:
        if not self.passages:
            raise EmptyIndexError("corpus index is empty; run ingestion first")
        query_vector = self.embedder(query)
        scored = [(p, cosine(query_vector, p.vector)) for p in self.passages]
        scored.sort(key=lambda pair: -pair[1])
        return scored[:k]


def _paragraphs(text: str) -> list[str]:
    chunks = []
    for block in text.split("\n\n"):
        block = block.strip()
        if block:
            chunks.append(block)
    return chunks


def register_semantic_search(toolbox: Toolbox, index: CorpusIndex) -> None:
    spec = ToolSpec(
        name="semantic_search",
        description="Search the ingested document corpus for passages relevant to a query.",
        input_schema=(
            ParamSpec("query", "string", required=True, doc="what to look for"),
            ParamSpec("k", "int", required=False, doc="number of passages (default 3)"),
        ),
        output_doc="ranked passages, each with its source id and similarity score",
    )

    def handler(arguments: dict[str, Any]) -> str:
        results = index.search(arguments["query"], k=int(arguments.get("k", 3)))
        lines = [
            f"{rank}. [{p.chunk_id}, score={score:.3f}] {p.text}"
            for rank, (p, score) in enumerate(results, start=1)
        ]
        return "\n".join(lines)

    toolbox.register(spec, handler)


class WorkspaceJailError(ValueError):
    pass


def _jailed_path(root: Path, raw: str) -> Path:
    candidate = Path(raw)
    if candidate.is_absolute():
        raise WorkspaceJailError(f"invalid path {raw!r}: absolute paths are not allowed")
    resolved = (root / candidate).resolve()
    if not resolved.is_relative_to(root.resolve()):
        raise WorkspaceJailError(f"invalid path {raw!r}: escapes the workspace root")
    return resolved


def register_file_io(toolbox: Toolbox, workspace_root: str) -> None:
    root = Path(workspace_root)
    root.mkdir(parents=True, exist_ok=True)
    spec = ToolSpec(
        name="file_io",
        description="Read, write, or list files inside the task workspace.",
        input_schema=(
            ParamSpec("mode", "string", required=True, doc="one of read, write, list"),
            ParamSpec("path", "string", required=False, doc="workspace-relative path"),
            ParamSpec("content", "string", required=False, doc="text to write (write mode)"),
        ),
        output_doc="file content, a write confirmation, or a newline-separated listing",
    )

    def handler(arguments: dict[str, Any]) -> str:
        mode = arguments["mode"]
        raw_path = arguments.get("path", ".")
        if mode == "read":
            target = _jailed_path(root, raw_path)
            return target.read_text(encoding="utf-8")
        if mode == "write":
            if "content" not in arguments:
                raise WorkspaceJailError("write mode requires 'content'")
            target = _jailed_path(root, raw_path)
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(arguments["content"], encoding="utf-8")
            return f"wrote {len(arguments['content'])} characters to {raw_path}"
        if mode == "list":
            target = _jailed_path(root, raw_path)
            entries = sorted(
                str(p.relative_to(root)) for p in target.rglob("*") if p.is_file()
            )
            return "\n".join(entries)
        raise WorkspaceJailError(f"unknown mode {mode!r}; use read, write, or list")

    toolbox.register(spec, handler)


def register_web_search(
    toolbox: Toolbox, fixtures: Optional[dict[str, str]] = None
) -> None:
    """Fixture-backed search: results come from a query-substring table."""
    spec = ToolSpec(
        name="web_search",
        description="Search the web for reference material.",
        input_schema=(ParamSpec("query", "string", required=True, doc="search query"),),
        output_doc="search result snippets",
    )
    table = fixtures or {}

    def handler(arguments: dict[str, Any]) -> str:
        query = arguments["query"]
        for needle, response in table.items():
            if needle.lower() in query.lower():
                return response
        return "No results (offline)."

    toolbox.register(spec, handler)


def register_code_execution(
    toolbox: Toolbox,
    workspace_root: Optional[str] = None,
    fixtures: Optional[dict[str, str]] = None,
    timeout_seconds: float = 10.0,
) -> None:
    """Run a source snippet, or replay a fixture keyed by source substring."""
    spec = ToolSpec(
        name="code_execution",
        description="Execute a Python source snippet and return its output.",
        input_schema=(ParamSpec("source", "string", required=True, doc="code to run"),),
        output_doc="stdout and stderr of the run",
    )
    table = fixtures or {}

    def handler(arguments: dict[str, Any]) -> str:
        source = arguments["source"]
        for needle, response in table.items():
            if needle in source:
                return response
        if fixtures is not None:
            return "No fixture matched this source."
        completed = subprocess.run(
            [sys.executable, "-I", "-c", source],
            capture_output=True,
            text=True,
            timeout=timeout_seconds,
            cwd=workspace_root,
        )
        parts = []
        if completed.stdout:
            parts.append(completed.stdout.rstrip())
        if completed.stderr:
            parts.append("stderr: " + completed.stderr.rstrip())
        return "\n".join(parts) if parts else "(no output)"

    toolbox.register(spec, handler, exclusive=True)
