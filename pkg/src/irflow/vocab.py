"""Embedding vocabulary: unique vertex text keys of a training graph set.

Index 0 is reserved for the unknown-element entry; every key unseen at
derivation time maps there. The file form is one key per line, line i
holding the key for index i, with line 0 fixed to "<unk>".
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .graph import ProgramGraph

UNKNOWN_TOKEN = "<unk>"


@dataclass
class Vocabulary:
    entries: list[str]
    index: dict[str, int] = field(init=False)
    unknown_index: int = 0

    def __post_init__(self):
        self.index = {key: i + 1 for i, key in enumerate(self.entries)}

    def __len__(self):
        return len(self.entries) + 1  # unknown entry included

    def lookup(self, key: str) -> int:
        return self.index.get(key, self.unknown_index)


def derive_vocab(train_graphs: list[ProgramGraph]) -> Vocabulary:
    if not train_graphs:
        raise ValueError("cannot derive a vocabulary from no graphs")
    keys = {v.text_key for g in train_graphs for v in g.vertices}
    return Vocabulary(entries=sorted(keys))


def coverage(vocab: Vocabulary, test_graphs: list[ProgramGraph]) -> float:
    total = sum(len(g.vertices) for g in test_graphs)
    if total == 0:
        raise ZeroDivisionError("no test vertices")
    covered = sum(1 for g in test_graphs for v in g.vertices
                  if v.text_key in vocab.index)
    return covered / total


def encode_vertices(vocab: Vocabulary, graph: ProgramGraph) -> list[int]:
    return [vocab.lookup(v.text_key) for v in graph.vertices]


def write_vocab(vocab: Vocabulary, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(UNKNOWN_TOKEN + "\n")
        for key in vocab.entries:
            fh.write(key + "\n")


def read_vocab(path: str) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != UNKNOWN_TOKEN:
        raise ValueError(f"{path} is not a vocabulary file (line 0 must be {UNKNOWN_TOKEN!r})")
    return Vocabulary(entries=lines[1:])
