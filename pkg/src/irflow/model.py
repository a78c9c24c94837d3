"""Gated message-passing network over program graphs.

Vertices start from an embedding-table lookup concatenated with a two-bit
root selector. Each propagation step sends, along every edge, the source
state gated elementwise by a learned function of the edge's sinusoidal
position embedding, then transformed by a per-edge-type linear layer;
incoming messages are mean-aggregated and fed to a GRU that updates the
vertex state. Backward counterparts of the three flow types are separate
edge types, giving six in total. Readout multiplies a sigmoid gate over
[final; initial] states with a linear head on the final state.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field

import numpy as np

from .analyses import target_kind
from .dataset import AnalysisExample, derive_seed
from .graph import CALL, CONTROL, DATA
from .rng import CounterRng
from .tensor import (AdamState, Tensor, add, adam_step, backward, concat,
                     constant, gather_rows, load_checkpoint, matmul, mul,
                     parameter, save_checkpoint, scale, segment_mean, sigmoid,
                     softmax_cross_entropy, sub, tanh, zero_grads)
from .vocab import Vocabulary, encode_vertices, read_vocab, write_vocab

log = logging.getLogger("irflow.model")

FLOW_INDEX = {CONTROL: 0, DATA: 1, CALL: 2}
EDGE_TYPE_COUNT = 6  # three flow types, forward and backward


class OddDimension(Exception):
    pass


@dataclass
class ModelConfig:
    d_embed: int = 32
    d_selector: int = 2
    T_train: int = 30
    classes: int = 2
    edge_type_count: int = EDGE_TYPE_COUNT
    learning_rate: float = 2.5e-4
    batch_vertices: int = 10000
    seed: int = 0
    mask: str = "kind"            # score vertices of the task's kind, or "all"
    train_budget: int = 60000     # example presentations before stopping
    val_interval: int = 500       # presentations between validations
    val_cap: int | None = None    # cap on validation examples (None = all)
    patience: int | None = None   # validations without a new best F1 before stopping

    @property
    def d(self) -> int:
        return self.d_embed + self.d_selector


_GRU_NAMES = ("gru_wxz", "gru_whz", "gru_bz", "gru_wxr", "gru_whr", "gru_br",
              "gru_wxc", "gru_whc", "gru_bc")


@dataclass
class ModelParams:
    tensors: dict[str, Tensor]

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def trainable(self) -> dict[str, Tensor]:
        return self.tensors

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.tensors.items()}

    @staticmethod
    def from_arrays(arrays: dict[str, np.ndarray]) -> "ModelParams":
        return ModelParams({name: parameter(arr) for name, arr in arrays.items()})


def init_params(vocab_size: int, config: ModelConfig) -> ModelParams:
    """Fresh parameters: embeddings uniform in [-0.1, 0.1], weight matrices
    uniform scaled by 1/sqrt(fan-in), biases zero. Each tensor draws from
    its own seeded counter stream, so creation order never matters."""
    d = config.d
    tensors: dict[str, Tensor] = {}

    def uniform(name, shape, bound):
        rng = CounterRng(derive_seed(config.seed, "param", name))
        tensors[name] = parameter(rng.uniform(shape, -bound, bound))

    def zeros(name, shape):
        tensors[name] = parameter(np.zeros(shape))

    uniform("embed", (vocab_size, config.d_embed), 0.1)
    for t in range(config.edge_type_count):
        uniform(f"edge_w{t}", (d, d), 1.0 / math.sqrt(d))
        zeros(f"edge_b{t}", (d,))
    uniform("pos_w", (d, d), 1.0 / math.sqrt(d))
    zeros("pos_b", (d,))
    for name in _GRU_NAMES:
        if "_b" in name:
            zeros(name, (d,))
        else:
            uniform(name, (d, d), 1.0 / math.sqrt(d))
    uniform("out_wf", (2 * d, config.classes), 1.0 / math.sqrt(2 * d))
    zeros("out_bf", (config.classes,))
    uniform("out_wg", (d, config.classes), 1.0 / math.sqrt(d))
    zeros("out_bg", (config.classes,))
    return ModelParams(tensors)


def sinusoidal_embedding(position: int, d: int) -> np.ndarray:
    """Fixed transformer-style position code: even slots sine, odd cosine."""
    if d % 2:
        raise OddDimension(f"dimension {d} must be even")
    if position < 0:
        raise ValueError("position must be >= 0")
    half = np.arange(d // 2)
    angles = position / np.power(10000.0, 2.0 * half / d)
    out = np.zeros(d)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


def position_table(max_position: int, d: int) -> np.ndarray:
    if d % 2:
        raise OddDimension(f"dimension {d} must be even")
    half = np.arange(d // 2)
    pos = np.arange(max_position + 1)[:, None]
    angles = pos / np.power(10000.0, 2.0 * half / d)[None, :]
    out = np.zeros((max_position + 1, d))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


# batching --------------------------------------------------------------------

@dataclass
class EncodedExample:
    n: int
    vocab_idx: np.ndarray
    root: int
    labels: np.ndarray
    kind_mask: np.ndarray
    edges: list[tuple[np.ndarray, np.ndarray, np.ndarray]]  # (src, dst, pos) x 6
    max_pos: int


@dataclass
class EncodedBatch:
    n: int
    vocab_idx: np.ndarray
    selector: np.ndarray
    labels: np.ndarray
    kind_mask: np.ndarray
    edges: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
    ranges: list[tuple[int, int]]
    example_count: int
    max_pos: int


def encode_example(example: AnalysisExample, vocab: Vocabulary,
                   include_backward: bool = True) -> EncodedExample:
    graph = example.graph
    kind = target_kind(example.task)
    buckets: list[list[tuple[int, int, int]]] = [[] for _ in range(EDGE_TYPE_COUNT)]
    for e in graph.edges:
        t = FLOW_INDEX[e.flow]
        buckets[t].append((e.src, e.dst, e.position))
        if include_backward:
            buckets[t + 3].append((e.dst, e.src, e.position))
    edges = []
    max_pos = 0
    for bucket in buckets:
        if bucket:
            arr = np.array(bucket, dtype=np.intp)
            edges.append((arr[:, 0], arr[:, 1], arr[:, 2]))
            max_pos = max(max_pos, int(arr[:, 2].max()))
        else:
            empty = np.zeros(0, dtype=np.intp)
            edges.append((empty, empty, empty))
    return EncodedExample(
        n=len(graph.vertices),
        vocab_idx=np.array(encode_vertices(vocab, graph), dtype=np.intp),
        root=example.root,
        labels=np.array(example.labels, dtype=np.intp),
        kind_mask=np.array([v.kind == kind for v in graph.vertices], dtype=bool),
        edges=edges,
        max_pos=max_pos)


def assemble_batch(encoded: list[EncodedExample]) -> EncodedBatch:
    """Disconnected union of encoded examples; vertex ids get offset."""
    total = sum(e.n for e in encoded)
    vocab_idx = np.concatenate([e.vocab_idx for e in encoded]) if encoded else np.zeros(0, np.intp)
    labels = np.concatenate([e.labels for e in encoded]) if encoded else np.zeros(0, np.intp)
    kind_mask = np.concatenate([e.kind_mask for e in encoded]) if encoded else np.zeros(0, bool)
    selector = np.zeros((total, 2))
    selector[:, 1] = 1.0
    ranges = []
    offset = 0
    for e in encoded:
        selector[offset + e.root] = (1.0, 0.0)
        ranges.append((offset, offset + e.n))
        offset += e.n
    edges = []
    for t in range(EDGE_TYPE_COUNT):
        srcs, dsts, poss = [], [], []
        offset = 0
        for e in encoded:
            src, dst, pos = e.edges[t]
            srcs.append(src + offset)
            dsts.append(dst + offset)
            poss.append(pos)
            offset += e.n
        cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0, np.intp)
        edges.append((cat(srcs), cat(dsts), cat(poss)))
    return EncodedBatch(
        n=total, vocab_idx=vocab_idx, selector=selector, labels=labels,
        kind_mask=kind_mask, edges=edges, ranges=ranges,
        example_count=len(encoded),
        max_pos=max((e.max_pos for e in encoded), default=0))


def encode_batch(examples: list[AnalysisExample], vocab: Vocabulary,
                 include_backward: bool = True) -> EncodedBatch:
    return assemble_batch([encode_example(e, vocab, include_backward) for e in examples])


def make_batches(encoded: list[EncodedExample], budget: int) -> list[list[EncodedExample]]:
    """Greedy packing under the vertex budget; an oversized example (a
    single graph larger than the budget) travels alone."""
    batches: list[list[EncodedExample]] = []
    current: list[EncodedExample] = []
    used = 0
    for e in encoded:
        if current and used + e.n > budget:
            batches.append(current)
            current, used = [], 0
        current.append(e)
        used += e.n
    if current:
        batches.append(current)
    return batches


# forward pass ------------------------------------------------------------------

def message(h_w: np.ndarray, edge_type: int, position: int,
            params: ModelParams, d: int) -> np.ndarray:
    """Single-edge reference message: gate the source state elementwise by
    2*sigmoid of a linear map of the position code, then apply the edge
    type's linear layer. The batched path must agree with this."""
    emb = sinusoidal_embedding(position, d)
    gate = 2.0 / (1.0 + np.exp(-(emb @ params["pos_w"].data + params["pos_b"].data)))
    return (h_w * gate) @ params[f"edge_w{edge_type}"].data + params[f"edge_b{edge_type}"].data


def propagate(batch: EncodedBatch, params: ModelParams, config: ModelConfig,
              T: int) -> tuple[Tensor, Tensor]:
    """T propagation steps; returns (final states, initial states)."""
    if T < 0:
        raise ValueError("T must be >= 0")
    h0 = concat([gather_rows(params["embed"], batch.vocab_idx),
                 constant(batch.selector)], axis=1)
    if T == 0 or batch.n == 0:
        return h0, h0
    d = config.d
    table = constant(position_table(batch.max_pos, d))
    active = [t for t in range(config.edge_type_count) if batch.edges[t][0].size]
    gates = {}
    for t in active:
        _, _, pos = batch.edges[t]
        gates[t] = scale(sigmoid(add(matmul(gather_rows(table, pos),
                                            params["pos_w"]), params["pos_b"])), 2.0)
    ones = constant(np.ones((batch.n, d)))
    h = h0
    for _ in range(T):
        msgs = []
        dsts = []
        for t in active:
            src, dst, _ = batch.edges[t]
            gated = mul(gather_rows(h, src), gates[t])
            msgs.append(add(matmul(gated, params[f"edge_w{t}"]), params[f"edge_b{t}"]))
            dsts.append(dst)
        if msgs:
            agg = segment_mean(concat(msgs, axis=0), np.concatenate(dsts), batch.n)
        else:
            agg = constant(np.zeros((batch.n, d)))
        z = sigmoid(add(add(matmul(agg, params["gru_wxz"]),
                            matmul(h, params["gru_whz"])), params["gru_bz"]))
        r = sigmoid(add(add(matmul(agg, params["gru_wxr"]),
                            matmul(h, params["gru_whr"])), params["gru_br"]))
        cand = tanh(add(add(matmul(agg, params["gru_wxc"]),
                            matmul(mul(r, h), params["gru_whc"])), params["gru_bc"]))
        h = add(mul(sub(ones, z), h), mul(z, cand))
    return h, h0


def readout(h_final: Tensor, h_initial: Tensor, params: ModelParams) -> Tensor:
    """Per-vertex class scores: sigmoid gate over [final; initial] times a
    linear head on the final state."""
    gate = sigmoid(add(matmul(concat([h_final, h_initial], axis=1),
                              params["out_wf"]), params["out_bf"]))
    head = add(matmul(h_final, params["out_wg"]), params["out_bg"])
    return mul(gate, head)


def model_scores(batch: EncodedBatch, params: ModelParams, config: ModelConfig,
                 T: int) -> Tensor:
    h_final, h_initial = propagate(batch, params, config, T)
    return readout(h_final, h_initial, params)


def loss(scores: Tensor, labels, mask) -> Tensor:
    """Mean softmax cross entropy over the masked vertices."""
    return softmax_cross_entropy(scores, labels, mask)


def _mask_of(batch: EncodedBatch, config: ModelConfig) -> np.ndarray:
    if config.mask == "all":
        return np.ones(batch.n, dtype=bool)
    return batch.kind_mask


# metrics ----------------------------------------------------------------------

@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int = 0) -> Metrics:
    """Binary metrics for the positive class; zero denominators give zero,
    so predicting nothing positive scores precision, recall, and F1 of 0
    when positives exist."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(precision, recall, f1, tp, fp, fn, tn)


def _count_batch(scores: np.ndarray, labels: np.ndarray, mask: np.ndarray):
    pred = scores.argmax(axis=1)[mask]
    truth = labels[mask]
    tp = int(((pred == 1) & (truth == 1)).sum())
    fp = int(((pred == 1) & (truth == 0)).sum())
    fn = int(((pred == 0) & (truth == 1)).sum())
    tn = int(((pred == 0) & (truth == 0)).sum())
    return tp, fp, fn, tn


def _evaluate_batches(params, batches, config, T):
    totals = [0, 0, 0, 0]
    losses = []
    for batch in batches:
        scores = model_scores(batch, params, config, T)
        mask = _mask_of(batch, config)
        if not mask.any():
            continue
        counts = _count_batch(scores.data, batch.labels, mask)
        for i in range(4):
            totals[i] += counts[i]
        losses.append(float(loss(scores, batch.labels, mask).data) * int(mask.sum()))
    weight = totals[0] + totals[1] + totals[2] + totals[3]
    mean_loss = sum(losses) / weight if weight else 0.0
    return metrics_from_counts(*totals), mean_loss


def evaluate(params: ModelParams, examples: list[AnalysisExample],
             vocab: Vocabulary, config: ModelConfig, T_infer: int,
             include_backward: bool = True) -> Metrics:
    """Pooled precision/recall/F1 of the positive class over all masked
    vertices of all examples, at T_infer propagation steps."""
    if T_infer < 1:
        raise ValueError("T_infer must be >= 1")
    encoded = [encode_example(e, vocab, include_backward) for e in examples]
    batches = [assemble_batch(group)
               for group in make_batches(encoded, config.batch_vertices)]
    metrics, _ = _evaluate_batches(params, batches, config, T_infer)
    return metrics


# training ----------------------------------------------------------------------

@dataclass
class TrainResult:
    params: ModelParams
    history: list[dict] = field(default_factory=list)
    vocab: Vocabulary | None = None
    best_step: int = 0
    best_f1: float = 0.0


def train(train_examples: list[AnalysisExample],
          val_examples: list[AnalysisExample],
          config: ModelConfig,
          vocab: Vocabulary | None = None) -> TrainResult:
    """Adam training with periodic validation; the returned parameters are
    the checkpoint with the best validation F1 (ties keep the earlier one).
    Fully deterministic for a fixed config."""
    from .vocab import derive_vocab  # local import avoids a cycle at module load

    if not train_examples:
        raise ValueError("no training examples")
    if vocab is None:
        by_source = {e.source_id: e.graph for e in train_examples}
        vocab = derive_vocab([by_source[s] for s in sorted(by_source)])
    encoded_train = [encode_example(e, vocab) for e in train_examples]
    encoded_val = [encode_example(e, vocab) for e in val_examples]
    if config.val_cap is not None:
        encoded_val = encoded_val[:config.val_cap]
    val_batches = [assemble_batch(g)
                   for g in make_batches(encoded_val, config.batch_vertices)]

    params = init_params(len(vocab), config)
    trainable = params.trainable()
    state: AdamState | None = None
    history: list[dict] = []
    best_arrays: dict[str, np.ndarray] | None = None
    best_f1 = -1.0
    best_step = 0
    stale = 0
    step = 0
    presented = 0
    next_val = config.val_interval
    stop = False
    epoch = 0
    while not stop and presented < config.train_budget:
        order = list(range(len(encoded_train)))
        random.Random(derive_seed(config.seed, "shuffle", epoch)).shuffle(order)
        epoch += 1
        for group in make_batches([encoded_train[i] for i in order],
                                  config.batch_vertices):
            batch = assemble_batch(group)
            mask = _mask_of(batch, config)
            presented += batch.example_count
            if not mask.any():
                log.warning("skipping batch with empty mask at step %d", step)
                continue
            step += 1
            scores = model_scores(batch, params, config, config.T_train)
            batch_loss = loss(scores, batch.labels, mask)
            zero_grads(trainable.values())
            backward(batch_loss)
            grads = {name: t.grad for name, t in trainable.items() if t.grad is not None}
            state = adam_step(trainable, grads, state, config.learning_rate)
            m = metrics_from_counts(*_count_batch(scores.data, batch.labels, mask))
            history.append({"step": step, "split": "train",
                            "precision": m.precision, "recall": m.recall,
                            "f1": m.f1, "loss": float(batch_loss.data)})
            if val_batches and presented >= next_val:
                while next_val <= presented:
                    next_val += config.val_interval
                vm, vloss = _evaluate_batches(params, val_batches, config, config.T_train)
                history.append({"step": step, "split": "val",
                                "precision": vm.precision, "recall": vm.recall,
                                "f1": vm.f1, "loss": vloss})
                if vm.f1 > best_f1:
                    best_f1, best_step, stale = vm.f1, step, 0
                    best_arrays = params.arrays()
                else:
                    stale += 1
                    if config.patience is not None and stale >= config.patience:
                        stop = True
                        break
            if presented >= config.train_budget:
                stop = True
                break
    if best_arrays is not None:
        params = ModelParams.from_arrays(best_arrays)
    return TrainResult(params=params, history=history, vocab=vocab,
                       best_step=best_step, best_f1=max(best_f1, 0.0))


# persistence --------------------------------------------------------------------

def save_model(prefix: str, params: ModelParams, vocab: Vocabulary,
               config: ModelConfig):
    """checkpoint at <prefix>.ckpt with vocabulary and config sidecars."""
    save_checkpoint(prefix + ".ckpt", {n: t.data for n, t in params.tensors.items()})
    write_vocab(vocab, prefix + ".vocab")
    with open(prefix + ".model.json", "w", encoding="utf-8") as fh:
        json.dump(asdict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(checkpoint_path: str) -> tuple[ModelParams, Vocabulary, ModelConfig]:
    if not checkpoint_path.endswith(".ckpt"):
        raise ValueError("expected a .ckpt path")
    prefix = checkpoint_path[: -len(".ckpt")]
    params = ModelParams.from_arrays(load_checkpoint(checkpoint_path))
    vocab = read_vocab(prefix + ".vocab")
    with open(prefix + ".model.json", encoding="utf-8") as fh:
        config = ModelConfig(**json.load(fh))
    return params, vocab, config
