"""Layered memory: per-task conversation buffers and the episodic store.

Short memory is the ordered message history of one agent working on one
task; it is created at task start and purged at completion, never shared.
Episodic memory is a persistent, embedded vector store of completed tasks
that later tasks (and later workflows) query semantically.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Optional

from agentflow.backend import Embedder, EmbeddingVector, cosine, embed
from agentflow.core import Message


class MemoryError_(Exception):
    pass


class ClosedMemoryError(MemoryError_):
    """A purged short memory was touched again — memories are single-task."""


class StorageFailureError(MemoryError_):
    pass


class ShortMemory:
    """Ordered message buffer with an optional capacity bound.

    The first ``pinned_prefix`` messages (system prompt + initial task
    instruction) survive eviction; beyond capacity the oldest non-pinned
    messages are dropped.
    """

    def __init__(self, capacity: Optional[int] = None, pinned_prefix: int = 2):
        if capacity is not None and capacity < pinned_prefix:
            raise ValueError("capacity smaller than the pinned prefix")
        self.capacity = capacity
        self.pinned_prefix = pinned_prefix
        self._messages: list[Message] = []
        self._closed = False

    def _check_open(self) -> None:
        if self._closed:
            raise ClosedMemoryError("short memory was purged; create a fresh instance")

    @property
    def messages(self) -> list[Message]:
        self._check_open()
        return list(self._messages)

    def append(self, message: Message) -> None:
        self._check_open()
        self._messages.append(message)
        if self.capacity is not None:
            while len(self._messages) > self.capacity and len(self._messages) > self.pinned_prefix:
                del self._messages[self.pinned_prefix]

    def __len__(self) -> int:
        self._check_open()
        return len(self._messages)

    def purge(self) -> None:
        self._messages = []
        self._closed = True

    @property
    def closed(self) -> bool:
        return self._closed


@dataclass
class Episode:
    """Persisted record of one completed task."""

    episode_id: str
    workflow_id: str
    task_id: str
    description: str
    result: str
    dependency_ids: list[str]
    success: bool
    description_vector: EmbeddingVector
    result_vector: EmbeddingVector
    created_at: datetime

    def to_dict(self) -> dict[str, Any]:
        return {
            "episode_id": self.episode_id,
            "workflow_id": self.workflow_id,
            "task_id": self.task_id,
            "description": self.description,
            "result": self.result,
            "dependency_ids": list(self.dependency_ids),
            "success": self.success,
            "description_vector": self.description_vector.values,
            "result_vector": self.result_vector.values,
            "created_at": self.created_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Episode":
        return cls(
            episode_id=data["episode_id"],
            workflow_id=data["workflow_id"],
            task_id=data["task_id"],
            description=data["description"],
            result=data["result"],
            dependency_ids=list(data.get("dependency_ids", [])),
            success=bool(data["success"]),
            description_vector=EmbeddingVector(values=list(data["description_vector"])),
            result_vector=EmbeddingVector(values=list(data["result_vector"])),
            created_at=datetime.fromisoformat(data["created_at"]),
        )


def make_episode(
    workflow_id: str,
    task_id: str,
    description: str,
    result: str,
    dependency_ids: list[str],
    success: bool,
    embedder: Embedder = embed,
) -> Episode:
    return Episode(
        episode_id=uuid.uuid4().hex,
        workflow_id=workflow_id,
        task_id=task_id,
        description=description,
        result=result,
        dependency_ids=list(dependency_ids),
        success=success,
        description_vector=embedder(description),
        result_vector=embedder(result),
        created_at=datetime.now(timezone.utc),
    )


@dataclass
class EpisodeScope:
    """Conjunctive retrieval filters.

    ``indirect_only`` drops episodes of the querying task's direct
    dependencies (those results already arrive via the queue), so only
    indirect prior work comes back.
    """

    same_workflow_only: bool = False
    indirect_only: bool = False
    successful_only: bool = False
    workflow_id: Optional[str] = None
    direct_dependency_ids: set[str] = field(default_factory=set)
    predicates: list[Callable[[Episode], bool]] = field(default_factory=list)

    def matches(self, episode: Episode) -> bool:
        if self.same_workflow_only and episode.workflow_id != self.workflow_id:
            return False
        if self.indirect_only and episode.task_id in self.direct_dependency_ids:
            return False
        if self.successful_only and not episode.success:
            return False
        return all(pred(episode) for pred in self.predicates)


class EpisodeStore:
    """Append-only episodic memory backed by a JSONL file.

    The whole store is indexed in memory at open; appends are atomic under
    the internal lock, and queries see a consistent prefix of appends.
    Pass ``path=None`` for a purely in-memory store.
    """

    def __init__(self, path: Optional[str] = None, embedder: Embedder = embed):
        self.path = path
        self.embedder = embedder
        self._episodes: list[Episode] = []
        self._lock = threading.Lock()
        if path:
            self._load()

    def _load(self) -> None:
        try:
            with open(self.path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self._episodes.append(Episode.from_dict(json.loads(line)))
        except FileNotFoundError:
            pass
        except (json.JSONDecodeError, KeyError) as exc:
            raise StorageFailureError(f"corrupt episode file {self.path}: {exc}") from exc

    def store(self, episode: Episode) -> None:
        with self._lock:
            self._episodes.append(episode)
            if self.path:
                try:
                    with open(self.path, "a", encoding="utf-8") as fh:
                        fh.write(json.dumps(episode.to_dict()) + "\n")
                except OSError as exc:
                    self._episodes.pop()
                    raise StorageFailureError(str(exc)) from exc

    def __len__(self) -> int:
        with self._lock:
            return len(self._episodes)

    def episodes(self) -> list[Episode]:
        with self._lock:
            return list(self._episodes)

    def truncate(self, count: int) -> None:
        """Restrict the in-memory index to the first ``count`` episodes."""
        with self._lock:
            self._episodes = self._episodes[:count]

    def query(
        self,
        query_text: str,
        scope: Optional[EpisodeScope] = None,
        k: int = 3,
    ) -> list[tuple[Episode, float]]:
        """Top-k episodes by max similarity over description and result.

        Scores are non-increasing; ties keep insertion order (stable sort).
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        scope = scope or EpisodeScope()
        query_vector = self.embedder(query_text)
        with self._lock:
            candidates = [e for e in self._episodes if scope.matches(e)]
        scored = [
            (
                episode,
                max(
                    cosine(query_vector, episode.description_vector),
                    cosine(query_vector, episode.result_vector),
                ),
            )
            for episode in candidates
        ]
        scored.sort(key=lambda pair: -pair[1])
        return scored[:k]
