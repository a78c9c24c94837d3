"""Program graphs from a mini SSA IR, classical data-flow oracles over
them, and a position-gated message-passing network that learns the same
analyses end to end."""

from .analyses import (DATADEP, DOMINANCE, LIVENESS, REACHABILITY,
                       SUBEXPRESSIONS, TASKS, OracleResult,
                       brute_force_oracle, run_oracle)
from .dataset import (AnalysisExample, DatasetSplit, filter_by_steps,
                      generate_examples, select_roots, split_dataset)
from .graph import ProgramGraph, build_graph, graph_stats, to_dot
from .ir import IRModule, ParseError, module_to_text, parse_module, validate
from .model import ModelConfig, ModelParams, evaluate, train
from .vocab import Vocabulary, coverage, derive_vocab, encode_vertices

__version__ = "0.1.0"
