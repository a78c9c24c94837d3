"""Gradient verification harnesses.

Primitive checks exercise each differentiable op on small random shapes;
the full-model check differentiates the training loss through readout,
propagation, position gating, and the GRU on a small random program batch
and compares against central finite differences.
"""

from __future__ import annotations

import numpy as np

from . import model as M
from . import synth
from .dataset import generate_examples
from .graph import build_graph
from .ir import parse_module
from .rng import CounterRng
from .tensor import (Tensor, add, binary_cross_entropy_with_logits, concat,
                     constant, gather_rows, grad_check, matmul, mul, reshape,
                     scale, segment_mean, sigmoid, softmax_cross_entropy, sub,
                     tanh)
from .vocab import derive_vocab
from .tensor import parameter


def mean_all(t: Tensor) -> Tensor:
    """Differentiable mean of every element, via matmuls with ones."""
    flat = reshape(t, (1, t.data.size))
    total = matmul(flat, constant(np.ones((t.data.size, 1))))
    return scale(total, 1.0 / t.data.size)


def primitive_grad_checks(seed: int = 0) -> list[tuple[str, float]]:
    """(name, max relative error) for every differentiable primitive."""
    rng = CounterRng(seed)

    def p(*shape):
        return parameter(rng.uniform(shape, -1.0, 1.0))

    ids = np.array([0, 2, 2, 1, 0])
    seg_ids = np.array([0, 0, 2, 1, 2, 2])
    labels = np.array([0, 1, 1, 0, 1])
    btargets = np.array([0.0, 1.0, 1.0, 0.0, 1.0, 0.0])
    bmask = np.array([True, False, True, True, True, False])

    cases = [
        ("matmul", lambda x, y: mean_all(matmul(x, y)), [p(4, 3), p(3, 5)]),
        ("add_bias", lambda x, y: mean_all(add(x, y)), [p(4, 3), p(3)]),
        ("sub", lambda x, y: mean_all(mul(sub(x, y), x)), [p(4, 4), p(4, 4)]),
        ("scale", lambda x: mean_all(scale(x, -2.5)), [p(3, 4)]),
        ("sigmoid", lambda x: mean_all(sigmoid(x)), [p(3, 3)]),
        ("tanh", lambda x: mean_all(tanh(x)), [p(3, 3)]),
        ("concat", lambda x, y: mean_all(mul(concat([x, y], axis=1),
                                             concat([x, y], axis=1))),
         [p(3, 2), p(3, 4)]),
        ("reshape", lambda x: mean_all(mul(reshape(x, (2, 6)), reshape(x, (2, 6)))),
         [p(3, 4)]),
        ("gather_rows", lambda t: mean_all(tanh(gather_rows(t, ids))), [p(3, 4)]),
        ("segment_mean", lambda v: mean_all(segment_mean(v, seg_ids, 4)), [p(6, 3)]),
        ("softmax_xent",
         lambda x: softmax_cross_entropy(x, labels, np.array([0, 1, 3])), [p(5, 2)]),
        ("bce_logits",
         lambda x: binary_cross_entropy_with_logits(x, btargets, bmask), [p(6)]),
    ]
    return [(name, grad_check(fn, inputs, epsilon=1e-6)) for name, fn, inputs in cases]


def random_small_batch(seed: int, _retry: int = 0):
    """A labeled single-example batch from a random small program."""
    sources = synth.generate_corpus(3, seed + 7919 * _retry, profile="small")
    graphs = [build_graph(parse_module(text, sid)) for sid, text in sources]
    vocab = derive_vocab(graphs)
    task = ("reachability", "dominance", "datadep", "liveness",
            "subexpressions")[seed % 5]
    examples = generate_examples(graphs, task, seed)
    if not examples:
        return random_small_batch(seed, _retry + 1)
    example = examples[seed % len(examples)]
    return M.encode_batch([example], vocab), vocab


def full_model_check(seed: int, T: int, sample: int = 6,
                     epsilon: float = 1e-6) -> float:
    """Max relative gradient error of the masked training loss w.r.t. every
    parameter tensor, on one random small batch, `sample` coordinates per
    tensor."""
    batch, vocab = random_small_batch(seed)
    config = M.ModelConfig(seed=seed)
    params = M.init_params(len(vocab), config)
    names = sorted(params.tensors)
    tensors = [params.tensors[n] for n in names]
    mask = batch.kind_mask if batch.kind_mask.any() else np.ones(batch.n, dtype=bool)

    def compute(*_args):
        scores = M.model_scores(batch, params, config, T)
        return M.loss(scores, batch.labels, mask)

    return grad_check(compute, tensors, epsilon=epsilon, sample=sample, seed=seed)
