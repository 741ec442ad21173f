"""Toolbox, refiner, and built-in tool tests.

Semantic refinement is verified against a brute-force cosine sort using
the same deterministic embedder (computed independently here).
"""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentflow.backend import cosine, embed
from agentflow.prompts import ToolCall
from agentflow.toolkits import (
    CorpusIndex,
    EmptyIndexError,
    register_code_execution,
    register_file_io,
    register_semantic_search,
    register_web_search,
)
from agentflow.tools import (
    CategoryNode,
    ParamSpec,
    RefinerConfig,
    RefinerKind,
    Toolbox,
    ToolboxError,
    ToolSpec,
    invoke,
    refine,
    tool_schema,
    tools_block,
)


def echo_spec() -> ToolSpec:
    return ToolSpec(
        name="echo",
        description="Echo the given text back.",
        input_schema=(ParamSpec("text", "string", required=True, doc="text to echo"),),
        output_doc="the same text",
    )


def make_toolbox(*specs_and_handlers) -> Toolbox:
    toolbox = Toolbox()
    for spec, handler in specs_and_handlers:
        toolbox.register(spec, handler)
    return toolbox


class TestToolSchema:
    def test_zero_parameter_tool(self):
        spec = ToolSpec(name="ping", description="Liveness check.")
        block = tool_schema(spec)
        assert "(no parameters)" in block

    def test_parameter_line_format(self):
        spec = ToolSpec(
            name="semantic_search",
            description="Search the corpus.",
            input_schema=(ParamSpec("query", "string", required=True, doc="the query"),),
        )
        block = tool_schema(spec)
        assert "query (string, required)" in block

    def test_rendering_deterministic(self):
        spec = echo_spec()
        assert tool_schema(spec) == tool_schema(spec)

    def test_block_count_matches_refined_order(self):
        specs = [
            ToolSpec(name=f"tool_{i}", description=f"tool number {i}") for i in range(4)
        ]
        block = tools_block(specs)
        for spec in specs:
            assert spec.name + ":" in block
        assert block.index("tool_0") < block.index("tool_1") < block.index("tool_3")

    def test_empty_set_renders_nothing(self):
        assert tools_block([]) == ""


class TestRefiners:
    def fixture_toolbox(self) -> Toolbox:
        return make_toolbox(
            (
                ToolSpec(name="file_io", description="Read and write files on disk."),
                lambda a: "",
            ),
            (
                ToolSpec(
                    name="web_search",
                    description="Search the web for pages and references.",
                ),
                lambda a: "",
            ),
            (
                ToolSpec(
                    name="code_exec", description="Execute source code and capture output."
                ),
                lambda a: "",
            ),
        )

    def test_identity_returns_registration_order(self):
        toolbox = self.fixture_toolbox()
        refined = refine(toolbox, "anything", RefinerConfig(kind=RefinerKind.IDENTITY))
        assert [s.name for s in refined] == ["file_io", "web_search", "code_exec"]

    def test_semantic_top1_picks_web_search(self):
        toolbox = self.fixture_toolbox()
        refined = refine(
            toolbox,
            "search the web for references",
            RefinerConfig(kind=RefinerKind.SEMANTIC, k=1),
        )
        assert [s.name for s in refined] == ["web_search"]

    def test_semantic_matches_brute_force_on_random_toolboxes(self):
        vocabulary = [
            "file", "disk", "web", "search", "code", "run", "index", "query",
            "report", "parse", "chart", "email",
        ]
        rng = random.Random(7)
        for _ in range(30):
            toolbox = Toolbox()
            n = rng.randint(1, 20)
            for i in range(n):
                words = rng.sample(vocabulary, rng.randint(2, 5))
                toolbox.register(
                    ToolSpec(name=f"t{i}", description=" ".join(words)), lambda a: ""
                )
            task = " ".join(rng.sample(vocabulary, 3))
            k = rng.randint(1, n)
            got = [
                s.name
                for s in refine(
                    toolbox, task, RefinerConfig(kind=RefinerKind.SEMANTIC, k=k)
                )
            ]
            task_vec = embed(task)
            scored = [
                (spec, cosine(task_vec, embed(spec.description)))
                for spec in toolbox.specs()
            ]
            scored.sort(key=lambda pair: -pair[1])
            want = [spec.name for spec, _ in scored[:k]]
            assert got == want

    def test_semantic_min_similarity_filters(self):
        toolbox = self.fixture_toolbox()
        refined = refine(
            toolbox,
            "zzz qqq completely unrelated",
            RefinerConfig(kind=RefinerKind.SEMANTIC, k=3, min_similarity=0.99),
        )
        assert refined == []

    def test_hierarchical_descends_best_branch(self):
        root = CategoryNode(label="root")
        root.children.append(CategoryNode(label="io", description="files and disks"))
        root.children.append(CategoryNode(label="search", description="web lookup and query"))
        toolbox = Toolbox(hierarchy=root)
        toolbox.register(
            ToolSpec(name="file_io", description="file io", category_path=("io",)),
            lambda a: "",
        )
        toolbox.register(
            ToolSpec(name="web_search", description="web search", category_path=("search",)),
            lambda a: "",
        )
        refined = refine(
            toolbox,
            "look something up on the web",
            RefinerConfig(kind=RefinerKind.HIERARCHICAL),
        )
        assert [s.name for s in refined] == ["web_search"]

    def test_hierarchical_keeps_uncategorized(self):
        root = CategoryNode(label="root")
        root.children.append(CategoryNode(label="io", description="files"))
        toolbox = Toolbox(hierarchy=root)
        toolbox.register(
            ToolSpec(name="file_io", description="file io", category_path=("io",)),
            lambda a: "",
        )
        toolbox.register(ToolSpec(name="always", description="always present"), lambda a: "")
        refined = refine(toolbox, "file work", RefinerConfig(kind=RefinerKind.HIERARCHICAL))
        assert {s.name for s in refined} == {"file_io", "always"}

    def test_unknown_category_rejected_at_registration(self):
        toolbox = Toolbox()
        with pytest.raises(ToolboxError):
            toolbox.register(
                ToolSpec(name="x", description="d", category_path=("ghost",)), lambda a: ""
            )


class TestInvoke:
    def test_echo(self):
        toolbox = make_toolbox((echo_spec(), lambda a: a["text"]))
        out = invoke(toolbox, ToolCall("echo", {"text": "hi"}))
        assert out == "hi"

    def test_missing_required_parameter(self):
        toolbox = make_toolbox((echo_spec(), lambda a: a["text"]))
        out = invoke(toolbox, ToolCall("echo", {}))
        assert out == "Error: missing required parameter 'text'"

    def test_unknown_tool_lists_available(self):
        toolbox = make_toolbox((echo_spec(), lambda a: a["text"]))
        out = invoke(toolbox, ToolCall("foo", {}))
        assert out.startswith("Error: unknown tool 'foo'")
        assert "echo" in out

    def test_handler_exception_becomes_observation(self):
        def boom(arguments):
            raise RuntimeError("kaput")

        toolbox = make_toolbox((echo_spec(), boom))
        out = invoke(toolbox, ToolCall("echo", {"text": "x"}))
        assert out.startswith("Error:") and "kaput" in out

    def test_type_mismatch_reported_per_field(self):
        spec = ToolSpec(
            name="count",
            description="count things",
            input_schema=(ParamSpec("n", "int", required=True),),
        )
        toolbox = make_toolbox((spec, lambda a: str(a["n"])))
        out = invoke(toolbox, ToolCall("count", {"n": [1]}))
        assert "expected int" in out

    def test_numeric_string_coerced(self):
        spec = ToolSpec(
            name="count",
            description="count things",
            input_schema=(ParamSpec("n", "int", required=True),),
        )
        toolbox = make_toolbox((spec, lambda a: str(a["n"] + 1)))
        assert invoke(toolbox, ToolCall("count", {"n": "41"})) == "42"

    def test_long_output_truncated(self):
        toolbox = make_toolbox((echo_spec(), lambda a: a["text"] * 10_000))
        out = invoke(toolbox, ToolCall("echo", {"text": "abc"}), result_cap=100)
        assert out.endswith("[truncated]")
        assert len(out) == 100 + len(" [truncated]")

    @settings(max_examples=30, deadline=None)
    @given(st.text(max_size=20))
    def test_invoke_never_raises(self, text):
        toolbox = make_toolbox((echo_spec(), lambda a: a["text"]))
        out = invoke(toolbox, ToolCall(text or "x", {"text": text}))
        assert isinstance(out, str)


class TestSemanticSearchTool:
    def corpus(self, tmp_path) -> CorpusIndex:
        (tmp_path / "solar.txt").write_text(
            "The sun is a main sequence star.\n\nIts mass dominates the solar system."
        )
        (tmp_path / "ocean.txt").write_text(
            "Oceans cover most of the planet surface.\n\nTides follow the moon."
        )
        return CorpusIndex.ingest(str(tmp_path))

    def test_exact_passage_ranks_first_with_unit_score(self, tmp_path):
        index = self.corpus(tmp_path)
        results = index.search("The sun is a main sequence star.", k=1)
        passage, score = results[0]
        assert passage.source == "solar.txt"
        assert score == pytest.approx(1.0, abs=1e-9)

    def test_k_larger_than_corpus_returns_everything_ranked(self, tmp_path):
        index = self.corpus(tmp_path)
        results = index.search("sun", k=50)
        assert len(results) == 4
        scores = [s for _, s in results]
        assert scores == sorted(scores, reverse=True)

    def test_disjoint_vocabulary_ranking(self, tmp_path):
        (tmp_path / "a.txt").write_text("alpha beta gamma")
        (tmp_path / "b.txt").write_text("delta epsilon zeta")
        index = CorpusIndex.ingest(str(tmp_path))
        results = index.search("alpha beta", k=2)
        assert results[0][0].source == "a.txt"
        # oracle: the non-matching passage scores exactly zero
        assert results[1][1] == pytest.approx(0.0, abs=1e-12)

    def test_empty_index_raises(self, tmp_path):
        index = CorpusIndex.ingest(str(tmp_path))
        with pytest.raises(EmptyIndexError):
            index.search("anything")

    def test_save_load_round_trip(self, tmp_path):
        index = self.corpus(tmp_path)
        path = str(tmp_path / "index.jsonl")
        index.save(path)
        loaded = CorpusIndex.load(path)
        a = [(p.chunk_id, round(s, 12)) for p, s in index.search("sun", k=4)]
        b = [(p.chunk_id, round(s, 12)) for p, s in loaded.search("sun", k=4)]
        assert a == b

    def test_registered_tool_returns_ranked_text(self, tmp_path):
        index = self.corpus(tmp_path)
        toolbox = Toolbox()
        register_semantic_search(toolbox, index)
        out = invoke(toolbox, ToolCall("semantic_search", {"query": "mass of the sun", "k": 2}))
        assert out.splitlines()[0].startswith("1. [")


class TestFileIoTool:
    def toolbox(self, tmp_path) -> Toolbox:
        toolbox = Toolbox()
        register_file_io(toolbox, str(tmp_path))
        return toolbox

    def test_read_after_write_round_trip(self, tmp_path):
        toolbox = self.toolbox(tmp_path)
        invoke(toolbox, ToolCall("file_io", {"mode": "write", "path": "notes/a.txt", "content": "hello"}))
        out = invoke(toolbox, ToolCall("file_io", {"mode": "read", "path": "notes/a.txt"}))
        assert out == "hello"

    def test_path_escape_rejected(self, tmp_path):
        toolbox = self.toolbox(tmp_path)
        out = invoke(toolbox, ToolCall("file_io", {"mode": "read", "path": "../x"}))
        assert out.startswith("Error:") and "escapes the workspace" in out

    def test_absolute_path_rejected(self, tmp_path):
        toolbox = self.toolbox(tmp_path)
        out = invoke(toolbox, ToolCall("file_io", {"mode": "write", "path": "/etc/passwd", "content": "x"}))
        assert out.startswith("Error:")

    def test_listing_matches_filesystem_snapshot(self, tmp_path):
        toolbox = self.toolbox(tmp_path)
        for rel in ("b.txt", "sub/a.txt", "sub/deep/c.txt"):
            invoke(toolbox, ToolCall("file_io", {"mode": "write", "path": rel, "content": "x"}))
        out = invoke(toolbox, ToolCall("file_io", {"mode": "list", "path": "."}))
        # independent snapshot straight from the filesystem
        snapshot = sorted(
            str(p.relative_to(tmp_path)) for p in tmp_path.rglob("*") if p.is_file()
        )
        assert out.splitlines() == snapshot


class TestWebSearchTool:
    def test_fixture_match(self):
        toolbox = Toolbox()
        register_web_search(toolbox, fixtures={"python": "python.org — official site"})
        out = invoke(toolbox, ToolCall("web_search", {"query": "Python docs"}))
        assert "python.org" in out

    def test_no_match_is_offline_stub(self):
        toolbox = Toolbox()
        register_web_search(toolbox)
        out = invoke(toolbox, ToolCall("web_search", {"query": "anything"}))
        assert "No results" in out


class TestCodeExecutionTool:
    def test_fixture_backed(self):
        toolbox = Toolbox()
        register_code_execution(toolbox, fixtures={"print('hi')": "hi"})
        out = invoke(toolbox, ToolCall("code_execution", {"source": "print('hi')"}))
        assert out == "hi"

    def test_subprocess_run(self, tmp_path):
        toolbox = Toolbox()
        register_code_execution(toolbox, workspace_root=str(tmp_path))
        out = invoke(toolbox, ToolCall("code_execution", {"source": "print(6 * 7)"}))
        assert out.strip() == "42"
