"""Labeled example generation, filtering, splitting, and serialization.

File format: JSON lines. A graph record carries {source_id, vertices,
edges}; an example record carries {source_id, task, root, labels,
step_count} with labels run-length encoded as "bit:count,..." pairs.
Example streams are self-contained: each referenced graph is written once,
before its first example. Output order is canonical (source_id, then task,
then root) so regeneration is byte-stable.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .analyses import (SUBEXPRESSIONS, TASKS, AnalysisError, run_oracle)
from .graph import GraphEdge, GraphVertex, ProgramGraph, VERTEX_KINDS, FLOW_TYPES
from .analyses import target_kind

log = logging.getLogger("irflow.dataset")

MAX_ROOTS_PER_GRAPH = 10
ROOT_DIVISOR = 10


class DatasetError(Exception):
    pass


class NoValidRoots(DatasetError):
    pass


class SchemaError(DatasetError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass
class AnalysisExample:
    graph: ProgramGraph
    task: str
    root: int
    labels: list[int]
    step_count: int
    source_id: str


@dataclass
class DatasetSplit:
    train: list[AnalysisExample] = field(default_factory=list)
    val: list[AnalysisExample] = field(default_factory=list)
    test: list[AnalysisExample] = field(default_factory=list)
    seed: int = 0


def derive_seed(*parts) -> int:
    """Stable 64-bit sub-seed from arbitrary labeled parts."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def task_valid_roots(graph: ProgramGraph, task: str) -> list[int]:
    """Root candidates: instruction vertices of defined functions; the
    subexpression task further requires an expression-forming instruction."""
    idx = graph.index()
    roots = [v.id for v in graph.vertices if idx.is_defined_instruction(v.id)]
    if task == SUBEXPRESSIONS:
        roots = [v for v in roots if idx.forms_expression(v)]
    return roots


def root_count(vertex_count: int) -> int:
    return min(-(-vertex_count // ROOT_DIVISOR), MAX_ROOTS_PER_GRAPH)


def select_roots(graph: ProgramGraph, task: str, seed: int) -> list[int]:
    """Sample root vertices for one graph, deterministically from the seed.

    The target count grows with graph size, one root per ten vertices,
    capped at ten; if fewer valid roots exist they are all returned.
    """
    if not graph.vertices:
        raise NoValidRoots(f"{graph.source_id}: empty graph")
    valid = task_valid_roots(graph, task)
    if not valid:
        raise NoValidRoots(f"{graph.source_id}: no valid {task} roots")
    n = root_count(len(graph.vertices))
    if len(valid) <= n:
        return list(valid)
    rng = random.Random(derive_seed(seed, graph.source_id, task))
    return sorted(rng.sample(valid, n))


def generate_examples(graphs: list[ProgramGraph], task: str, seed: int,
                      jobs: int = 1) -> list[AnalysisExample]:
    """One labeled example per selected root per graph. Graphs without
    valid roots and roots the oracle rejects are skipped with a log line.
    Output is sorted by (source_id, root) regardless of job count."""
    if task not in TASKS:
        raise DatasetError(f"unknown task {task!r}")

    def label_graph(graph):
        out = []
        try:
            roots = select_roots(graph, task, seed)
        except NoValidRoots as exc:
            log.warning("skipping graph: %s", exc)
            return out
        for root in roots:
            try:
                result = run_oracle(task, graph, root)
            except AnalysisError as exc:
                log.warning("skipping %s root %d: %s", graph.source_id, root, exc)
                continue
            out.append(AnalysisExample(graph, task, root, result.labels,
                                       result.step_count, graph.source_id))
        return out

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(label_graph, graphs))
    else:
        chunks = [label_graph(g) for g in graphs]
    examples = [e for chunk in chunks for e in chunk]
    examples.sort(key=lambda e: (e.source_id, e.root))
    return examples


def filter_by_steps(examples: list[AnalysisExample], max_steps: int) -> list[AnalysisExample]:
    if max_steps < 0:
        raise DatasetError("step limit must be >= 0")
    return [e for e in examples if e.step_count <= max_steps]


def split_dataset(examples: list[AnalysisExample], seed: int) -> DatasetSplit:
    """3:1:1 split by example count with all examples of one source_id kept
    together. Groups are shuffled by seed, then each goes to the split with
    the largest remaining deficit against its target share."""
    groups: dict[str, list[AnalysisExample]] = {}
    for e in examples:
        groups.setdefault(e.source_id, []).append(e)
    ids = sorted(groups)
    random.Random(derive_seed(seed, "split")).shuffle(ids)
    total = len(examples)
    targets = [total * 3 / 5, total / 5, total / 5]
    counts = [0, 0, 0]
    buckets: list[list[AnalysisExample]] = [[], [], []]
    for source_id in ids:
        deficits = [targets[i] - counts[i] for i in range(3)]
        pick = max(range(3), key=lambda i: deficits[i])
        buckets[pick].extend(groups[source_id])
        counts[pick] += len(groups[source_id])
    for bucket in buckets:
        bucket.sort(key=lambda e: (e.source_id, e.task, e.root))
    return DatasetSplit(train=buckets[0], val=buckets[1], test=buckets[2], seed=seed)


# run-length encoding ---------------------------------------------------------

def encode_labels(labels: list[int]) -> str:
    if not labels:
        return ""
    runs = []
    current, count = labels[0], 0
    for bit in labels:
        if bit == current:
            count += 1
        else:
            runs.append(f"{current}:{count}")
            current, count = bit, 1
    runs.append(f"{current}:{count}")
    return ",".join(runs)


def decode_labels(text: str, line: int = 0) -> list[int]:
    if not text:
        return []
    labels: list[int] = []
    for run in text.split(","):
        try:
            bit, count = run.split(":")
            bit, count = int(bit), int(count)
        except ValueError:
            raise SchemaError(line, f"bad label run {run!r}") from None
        if bit not in (0, 1) or count < 1:
            raise SchemaError(line, f"bad label run {run!r}")
        labels.extend([bit] * count)
    return labels


# serialization ----------------------------------------------------------------

def _graph_record(graph: ProgramGraph) -> str:
    return json.dumps({
        "source_id": graph.source_id,
        "vertices": [{"id": v.id, "kind": v.kind, "text_key": v.text_key,
                      "function": v.function} for v in graph.vertices],
        "edges": [{"src": e.src, "dst": e.dst, "flow": e.flow,
                   "position": e.position} for e in graph.edges],
    }, separators=(",", ":"))


def _example_record(example: AnalysisExample) -> str:
    return json.dumps({
        "source_id": example.source_id,
        "task": example.task,
        "root": example.root,
        "labels": encode_labels(example.labels),
        "step_count": example.step_count,
    }, separators=(",", ":"))


def serialize_graphs(graphs: list[ProgramGraph]) -> str:
    records = [_graph_record(g) for g in sorted(graphs, key=lambda g: g.source_id)]
    return "".join(r + "\n" for r in records)


def serialize_examples(examples: list[AnalysisExample]) -> str:
    """Self-contained stream: each graph once, before its first example."""
    ordered = sorted(examples, key=lambda e: (e.source_id, e.task, e.root))
    lines = []
    written = set()
    for e in ordered:
        if e.source_id not in written:
            lines.append(_graph_record(e.graph))
            written.add(e.source_id)
        lines.append(_example_record(e))
    return "".join(line + "\n" for line in lines)


def _parse_graph_record(record: dict, line: int) -> ProgramGraph:
    try:
        vertices = [GraphVertex(v["id"], v["kind"], v["text_key"], v["function"])
                    for v in record["vertices"]]
        edges = [GraphEdge(e["src"], e["dst"], e["flow"], e["position"])
                 for e in record["edges"]]
        graph = ProgramGraph(vertices, edges, record["source_id"])
    except (KeyError, TypeError) as exc:
        raise SchemaError(line, f"bad graph record: {exc}") from None
    for i, v in enumerate(graph.vertices):
        if v.id != i or v.kind not in VERTEX_KINDS:
            raise SchemaError(line, f"bad vertex record {v}")
    for e in graph.edges:
        if e.flow not in FLOW_TYPES or not (0 <= e.src < len(vertices)) \
                or not (0 <= e.dst < len(vertices)):
            raise SchemaError(line, f"bad edge record {e}")
    return graph


def deserialize_graphs(text: str) -> list[ProgramGraph]:
    """Graph records from a stream; example records are ignored."""
    graphs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        record = _parse_json(raw, lineno)
        if "vertices" in record:
            graphs.append(_parse_graph_record(record, lineno))
    return graphs


def _parse_json(raw: str, lineno: int) -> dict:
    try:
        record = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(lineno, f"bad JSON: {exc}") from None
    if not isinstance(record, dict):
        raise SchemaError(lineno, "record is not an object")
    return record


def deserialize_examples(text: str,
                         graphs: dict[str, ProgramGraph] | None = None) -> list[AnalysisExample]:
    """Examples from a stream; graph records bind by source_id. Extra known
    graphs may be passed for streams that do not embed them."""
    known = dict(graphs or {})
    examples = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        record = _parse_json(raw, lineno)
        if "vertices" in record:
            graph = _parse_graph_record(record, lineno)
            known[graph.source_id] = graph
            continue
        try:
            source_id = record["source_id"]
            task = record["task"]
            root = record["root"]
            labels = decode_labels(record["labels"], lineno)
            step_count = record["step_count"]
        except KeyError as exc:
            raise SchemaError(lineno, f"missing field {exc}") from None
        if task not in TASKS:
            raise SchemaError(lineno, f"unknown task {task!r}")
        graph = known.get(source_id)
        if graph is None:
            raise SchemaError(lineno, f"example references unknown graph {source_id!r}")
        if len(labels) != len(graph.vertices):
            raise SchemaError(lineno, f"labels cover {len(labels)} of "
                                      f"{len(graph.vertices)} vertices")
        examples.append(AnalysisExample(graph, task, root, labels, step_count, source_id))
    return examples


def read_text(path: str) -> str:
    if str(path).endswith(".gz"):
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            return fh.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def write_text(path: str, text: str):
    if str(path).endswith(".gz"):
        # Fixed mtime keeps gzip output byte-stable across runs.
        with gzip.GzipFile(path, "wb", mtime=0) as fh:
            fh.write(text.encode("utf-8"))
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def dataset_stats(examples: list[AnalysisExample]) -> dict:
    """Counts, label balance, the always-negative baseline (over all
    vertices and over the task's target kind), and a step histogram."""
    total = 0
    positive = 0
    masked_total = 0
    masked_positive = 0
    histogram: dict[int, int] = {}
    for e in examples:
        kind = target_kind(e.task)
        for vertex, label in zip(e.graph.vertices, e.labels):
            total += 1
            positive += label
            if vertex.kind == kind:
                masked_total += 1
                masked_positive += label
        histogram[e.step_count] = histogram.get(e.step_count, 0) + 1
    return {
        "count": len(examples),
        "positive_fraction": positive / total if total else 0.0,
        "negative_baseline_accuracy": (total - positive) / total if total else 0.0,
        "negative_baseline_accuracy_masked":
            (masked_total - masked_positive) / masked_total if masked_total else 0.0,
        "step_histogram": dict(sorted(histogram.items())),
    }
