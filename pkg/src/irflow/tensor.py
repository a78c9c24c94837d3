"""Dense float64 tensors with reverse-mode differentiation.

Each operation returns a tensor recording its parents and a closure that
routes the output gradient back to them; `backward` walks that recorded
graph once in reverse topological order. Arrays are numpy, all math is
64-bit, and every op checks its output for NaN/Inf so bad values fail at
the op that produced them.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np


class TensorError(Exception):
    pass


class ShapeMismatch(TensorError):
    pass


class NonFiniteValue(TensorError):
    pass


class EmptyMask(TensorError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue("tensor created with non-finite values")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteValue(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out._parents = parents if out.requires_grad else ()
    out._backward = backward if out.requires_grad else None
    return out


def _accumulate(t: Tensor, grad: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        # Copy: callers may hand the same array to several parents.
        t.grad = np.array(grad)
    else:
        t.grad += grad


def _scatter_rows(shape: tuple[int, ...], idx: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Sum `rows` into a zero array at row positions `idx` (duplicates add).
    A flattened bincount; several times faster than np.add.at."""
    if rows.ndim == 2:
        d = shape[1]
        flat = np.bincount((idx[:, None] * d + np.arange(d)).ravel(),
                           weights=rows.ravel(), minlength=shape[0] * d)
        return flat.reshape(shape)
    acc = np.zeros(shape)
    np.add.at(acc, idx, rows)
    return acc


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul {a.data.shape} @ {b.data.shape}")

    def backward(grad):
        _accumulate(a, grad @ b.data.T)
        _accumulate(b, a.data.T @ grad)

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    bias = a.data.shape != b.data.shape
    if bias and not (b.data.ndim == 1 and a.data.ndim == 2
                     and a.data.shape[1] == b.data.shape[0]):
        raise ShapeMismatch(f"add {a.data.shape} + {b.data.shape}")

    def backward(grad):
        _accumulate(a, grad)
        _accumulate(b, grad.sum(axis=0) if bias else grad)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"sub {a.data.shape} - {b.data.shape}")

    def backward(grad):
        _accumulate(a, grad)
        _accumulate(b, -grad)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"mul {a.data.shape} * {b.data.shape}")

    def backward(grad):
        _accumulate(a, grad * b.data)
        _accumulate(b, grad * a.data)

    return _result(a.data * b.data, (a, b), backward, "mul")


def scale(a: Tensor, factor: float) -> Tensor:
    def backward(grad):
        _accumulate(a, grad * factor)

    return _result(a.data * factor, (a,), backward, "scale")


def sigmoid(a: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-np.clip(a.data, -60.0, 60.0)))

    def backward(grad):
        _accumulate(a, grad * out_data * (1.0 - out_data))

    return _result(out_data, (a,), backward, "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(grad):
        _accumulate(a, grad * (1.0 - out_data * out_data))

    return _result(out_data, (a,), backward, "tanh")


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeMismatch("concat of no tensors")
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(grad):
        for t, start, stop in zip(tensors, offsets, offsets[1:]):
            index = [slice(None)] * grad.ndim
            index[axis] = slice(start, stop)
            _accumulate(t, grad[tuple(index)])

    return _result(np.concatenate([t.data for t in tensors], axis=axis),
                   tuple(tensors), backward, "concat")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    count = 1
    for d in shape:
        count *= d
    if count != a.data.size:
        raise ShapeMismatch(f"reshape {a.data.shape} -> {shape}")

    def backward(grad):
        _accumulate(a, grad.reshape(a.data.shape))

    return _result(a.data.reshape(shape), (a,), backward, "reshape")


def gather_rows(table: Tensor, indices) -> Tensor:
    """Rows of `table` at integer `indices`; gradients scatter-add back."""
    idx = np.asarray(indices, dtype=np.intp)
    if table.data.ndim != 2:
        raise ShapeMismatch("gather_rows needs a 2-D table")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ShapeMismatch("gather_rows index out of range")

    def backward(grad):
        _accumulate(table, _scatter_rows(table.data.shape, idx, grad))

    return _result(table.data[idx], (table,), backward, "gather_rows")


def segment_mean(values: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Mean of rows per segment; empty segments yield zero rows."""
    ids = np.asarray(segment_ids, dtype=np.intp)
    if values.data.ndim < 1 or ids.shape != values.data.shape[:1]:
        raise ShapeMismatch("segment_mean needs one id per row")
    if ids.size and (ids.min() < 0 or ids.max() >= num_segments):
        raise ShapeMismatch("segment id out of range")
    counts = np.bincount(ids, minlength=num_segments).astype(np.float64)
    out_shape = (num_segments,) + values.data.shape[1:]
    sums = _scatter_rows(out_shape, ids, values.data)
    denom = np.maximum(counts, 1.0).reshape((num_segments,) + (1,) * (values.data.ndim - 1))
    out_data = sums / denom

    def backward(grad):
        _accumulate(values, (grad / denom)[ids])

    return _result(out_data, (values,), backward, "segment_mean")


def softmax_cross_entropy(logits: Tensor, labels, mask) -> Tensor:
    """Mean cross entropy of row-wise softmax over the masked rows.

    `labels` are integer class ids per row; `mask` is a boolean vector or
    an index array selecting the rows that contribute.
    """
    labels = np.asarray(labels, dtype=np.intp)
    sel = np.asarray(mask)
    rows = np.nonzero(sel)[0] if sel.dtype == bool else sel.astype(np.intp)
    if rows.size == 0:
        raise EmptyMask("loss over an empty vertex mask")
    z = logits.data[rows]
    z = z - z.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    picked = log_probs[np.arange(rows.size), labels[rows]]
    out_data = np.array(-picked.mean())

    def backward(grad):
        softmax = np.exp(log_probs)
        softmax[np.arange(rows.size), labels[rows]] -= 1.0
        full = np.zeros_like(logits.data)
        full[rows] = softmax / rows.size
        _accumulate(logits, full * grad)

    return _result(out_data, (logits,), backward, "softmax_cross_entropy")


def binary_cross_entropy_with_logits(logits: Tensor, targets, mask) -> Tensor:
    """Mean binary cross entropy over masked positions, computed stably:
    bce(x, t) = max(x, 0) - x*t + log(1 + exp(-|x|))."""
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != logits.data.shape:
        raise ShapeMismatch(f"targets {t.shape} vs logits {logits.data.shape}")
    sel = np.asarray(mask)
    idx = np.nonzero(sel)[0] if sel.dtype == bool else sel.astype(np.intp)
    if idx.size == 0:
        raise EmptyMask("loss over an empty mask")
    x = logits.data[idx]
    ti = t[idx]
    out_data = np.array((np.maximum(x, 0) - x * ti + np.log1p(np.exp(-np.abs(x)))).mean())

    def backward(grad):
        full = np.zeros_like(logits.data)
        full[idx] = (1.0 / (1.0 + np.exp(-x)) - ti) / idx.size
        _accumulate(logits, full * grad)

    return _result(out_data, (logits,), backward, "binary_cross_entropy")


def backward(loss: Tensor):
    """Reverse pass from a scalar; each recorded op sees its gradient once."""
    if loss.data.size != 1:
        raise ShapeMismatch("backward expects a scalar loss")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:  # iterative DFS: tapes outgrow the recursion limit
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


def grad_check(f, inputs: list[Tensor], epsilon: float = 1e-6,
               sample: int | None = None, seed: int = 0,
               denom_floor: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central differences.

    f(*inputs) must return a scalar tensor of O(1) magnitude. Relative
    error denominators are floored at `denom_floor` so finite-difference
    roundoff on near-zero gradients does not dominate. With `sample`, only
    that many coordinates per input are checked (chosen by `seed`).
    """
    if not 0 < epsilon <= 1e-2:
        raise ValueError("epsilon must be in (0, 1e-2]")
    zero_grads(inputs)
    backward(f(*inputs))
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in inputs]
    zero_grads(inputs)
    rng = random.Random(seed)
    worst = 0.0
    for t, grads in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        coords = range(flat.size)
        if sample is not None and flat.size > sample:
            coords = sorted(rng.sample(range(flat.size), sample))
        for c in coords:
            original = flat[c]
            flat[c] = original + epsilon
            up = float(f(*inputs).data)
            flat[c] = original - epsilon
            down = float(f(*inputs).data)
            flat[c] = original
            numeric = (up - down) / (2.0 * epsilon)
            a = grads.reshape(-1)[c]
            err = abs(a - numeric) / max(abs(a), abs(numeric), denom_floor)
            worst = max(worst, err)
    return worst


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState | None, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """One Adam update with bias correction; parameters change in place."""
    if state is None:
        state = AdamState()
    state.step += 1
    t = state.step
    for name in sorted(params):
        p = params[name]
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeMismatch(f"gradient {name}: {g.shape} vs {p.data.shape}")
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


# checkpoint file format ------------------------------------------------------
#
#   line   "ckpt1 <tensor count>\n"                      (ASCII)
#   per tensor, sorted by name:
#     line "<name> <dim0> <dim1> ...\n"                  (no dims for scalars)
#     prod(dims) * 8 bytes of little-endian IEEE-754 float64, row-major

_CKPT_MAGIC = "ckpt1"


def save_checkpoint(path: str, tensors: dict[str, np.ndarray]):
    with open(path, "wb") as fh:
        fh.write(f"{_CKPT_MAGIC} {len(tensors)}\n".encode())
        for name in sorted(tensors):
            if any(ch.isspace() for ch in name):
                raise ValueError(f"tensor name {name!r} contains whitespace")
            arr = np.ascontiguousarray(tensors[name], dtype=np.float64)
            dims = "".join(f" {d}" for d in arr.shape)
            fh.write(f"{name}{dims}\n".encode())
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        header = fh.readline().decode().split()
        if len(header) != 2 or header[0] != _CKPT_MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        for _ in range(int(header[1])):
            parts = fh.readline().decode().split()
            name, dims = parts[0], tuple(int(d) for d in parts[1:])
            count = 1
            for d in dims:
                count *= d
            payload = fh.read(count * 8)
            if len(payload) != count * 8:
                raise ValueError(f"{path}: truncated payload for {name!r}")
            tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    return tensors
