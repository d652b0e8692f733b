"""Dense float64 tensors with tape-based reverse-mode differentiation.

The engine is define-by-run: every training iteration builds a fresh
``Tape``, runs the forward pass through the ops below, and calls
``backward`` on the scalar loss. The tape records one entry per primitive
op; replaying the records in reverse order of recording is a valid reverse
topological order because an op's inputs always exist before its output.

Tensors are immutable once created. A tensor either lives on a tape
(leaves and op outputs, eligible for gradients) or is a free constant
(``tape is None``); ops accept any mix of the two, and a pure-constant
expression produces a constant without recording anything.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ContractError, DimensionError, DomainError

_GELU_SCALE = math.sqrt(2.0 / math.pi)
_GELU_CUBIC = 0.044715


class Tensor:
    """Immutable dense array of float64 values, optionally on a tape."""

    __slots__ = ("data", "tape", "_node_id")

    def __init__(self, data, tape: "Tape | None" = None, node_id: int | None = None):
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.tape = tape
        self._node_id = node_id

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        """Row-major flat view of the stored values."""
        return self.data.reshape(-1)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() requires a single value, got shape {self.shape}")
        return float(self.data)

    def __repr__(self):
        kind = "const" if self.tape is None else f"node {self._node_id}"
        return f"Tensor({kind}, shape={self.shape})"

    # arithmetic sugar; the free functions below do the real work
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of primitive ops plus per-node gradient bookkeeping."""

    def __init__(self):
        self._records: list[tuple[int, object]] = []
        self._num_nodes = 0
        self._leaves: list[Tensor] = []

    def _next_id(self) -> int:
        nid = self._num_nodes
        self._num_nodes += 1
        return nid

    def leaf(self, data) -> Tensor:
        """Register a differentiable leaf (a parameter or probed input)."""
        t = Tensor(data, tape=self, node_id=self._next_id())
        self._leaves.append(t)
        return t

    def _record(self, data, backward_fn) -> Tensor:
        out = Tensor(data, tape=self, node_id=self._next_id())
        self._records.append((out._node_id, backward_fn))
        return out

    @property
    def num_nodes(self) -> int:
        return self._num_nodes


def constant(data) -> Tensor:
    """Wrap raw values as a tape-free constant tensor."""
    return data if isinstance(data, Tensor) and data.tape is None else Tensor(
        data.data if isinstance(data, Tensor) else data
    )


def detach(t: Tensor) -> Tensor:
    """Constant copy of ``t``: same values, no gradient path."""
    return Tensor(t.data)


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse pass from a scalar loss; returns gradients for every leaf.

    Nodes are visited in exact reverse order of recording, so every
    consumer of a node has contributed to its accumulator before the
    node's own producing op reads it. Leaves the loss does not depend on
    get zero gradients.
    """
    if not isinstance(loss, Tensor) or loss.tape is None:
        raise ContractError("backward requires a tensor recorded on a tape")
    if loss.data.shape != ():
        raise ContractError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    tape = loss.tape
    acc: list[np.ndarray | None] = [None] * tape._num_nodes
    acc[loss._node_id] = np.ones((), dtype=np.float64)
    for out_id, backward_fn in reversed(tape._records):
        g = acc[out_id]
        if g is None:
            continue
        backward_fn(g, acc)
    grads: dict[Tensor, np.ndarray] = {}
    for leaf in tape._leaves:
        g = acc[leaf._node_id]
        grads[leaf] = np.zeros_like(leaf.data) if g is None else np.asarray(g)
    return grads


# ---------------------------------------------------------------------------
# op plumbing


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))

def _shared_tape(*tensors: Tensor) -> "Tape | None":
    tape = None
    for t in tensors:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif tape is not t.tape:
            raise ContractError("operands were recorded on different tapes")
    return tape


def _emit(tape, data, grad_pairs) -> Tensor:
    """Create the output tensor, recording input gradient rules if on a tape.

    ``grad_pairs`` is a list of (input tensor, fn) where fn maps the
    output gradient to that input's contribution. Accumulation never
    mutates a previously stored array, so view-returning grad fns are safe.
    """
    if tape is None:
        return Tensor(data)
    live = [(t._node_id, fn) for t, fn in grad_pairs if t.tape is not None]

    def backward_fn(g, acc):
        for nid, fn in live:
            contrib = fn(g)
            acc[nid] = contrib if acc[nid] is None else acc[nid] + contrib

    return tape._record(data, backward_fn)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    g = np.asarray(grad)
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# binary ops (numpy broadcasting semantics)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    tape = _shared_tape(a, b)
    return _emit(tape, a.data + b.data, [
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(g, b.shape)),
    ])


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    tape = _shared_tape(a, b)
    return _emit(tape, a.data - b.data, [
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(-g, b.shape)),
    ])


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    tape = _shared_tape(a, b)
    ad, bd = a.data, b.data
    return _emit(tape, ad * bd, [
        (a, lambda g: _unbroadcast(g * bd, a.shape)),
        (b, lambda g: _unbroadcast(g * ad, b.shape)),
    ])


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    tape = _shared_tape(a, b)
    ad, bd = a.data, b.data
    return _emit(tape, ad / bd, [
        (a, lambda g: _unbroadcast(g / bd, a.shape)),
        (b, lambda g: _unbroadcast(-g * ad / (bd * bd), b.shape)),
    ])


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _emit(a.tape, -a.data, [(a, lambda g: -g)])


def square(a) -> Tensor:
    return mul(a, a)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    tape = _shared_tape(a, b)
    ad, bd = a.data, b.data
    return _emit(tape, ad @ bd, [
        (a, lambda g: g @ bd.T),
        (b, lambda g: ad.T @ g),
    ])


# ---------------------------------------------------------------------------
# unary elementwise ops


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    return _emit(a.tape, np.where(mask, a.data, 0.0), [(a, lambda g: g * mask)])


def gelu(a) -> Tensor:
    """GELU via the tanh approximation 0.5*x*(1 + tanh(s*(x + c*x^3)))."""
    a = _as_tensor(a)
    x = a.data
    x2 = x * x
    th = np.tanh(_GELU_SCALE * (x + _GELU_CUBIC * x2 * x))
    out = 0.5 * x * (1.0 + th)

    def grad(g):
        local = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * _GELU_SCALE * (
            1.0 + 3.0 * _GELU_CUBIC * x2
        )
        return g * local

    return _emit(a.tape, out, [(a, grad)])


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _emit(a.tape, out, [(a, lambda g: g * out)])


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log requires strictly positive inputs")
    x = a.data
    return _emit(a.tape, np.log(x), [(a, lambda g: g / x)])


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt requires non-negative inputs")
    out = np.sqrt(a.data)
    return _emit(a.tape, out, [(a, lambda g: g * (0.5 / out))])


def cos(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    return _emit(a.tape, np.cos(x), [(a, lambda g: -g * np.sin(x))])


def sin(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    return _emit(a.tape, np.sin(x), [(a, lambda g: g * np.cos(x))])


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return _emit(a.tape, out, [(a, lambda g: g * (1.0 - out * out))])


_ELEMENTWISE = {
    "gelu": gelu,
    "relu": relu,
    "exp": exp,
    "cos": cos,
    "sin": sin,
    "log": log,
    "sqrt": sqrt,
    "tanh": tanh,
}


def elementwise(op: str, a) -> Tensor:
    """Apply a named elementwise op; see ``_ELEMENTWISE`` for the menu."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    return fn(a)


# ---------------------------------------------------------------------------
# reductions and shape ops


def tsum(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    in_shape = a.shape

    if axis is None:
        out = a.data.sum()

        def grad(g):
            return np.broadcast_to(g, in_shape).copy() if in_shape else np.asarray(g)

        return _emit(a.tape, out, [(a, grad)])

    out = a.data.sum(axis=axis, keepdims=keepdims)

    def grad_axis(g):
        ge = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(ge, in_shape).copy()

    return _emit(a.tape, out, [(a, grad_axis)])


def tmean(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.shape}")
    return _emit(a.tape, a.data.T.copy(), [(a, lambda g: np.asarray(g).T)])


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    in_shape = a.shape
    return _emit(a.tape, a.data.reshape(shape), [(a, lambda g: np.asarray(g).reshape(in_shape))])


def rows(a, start: int, stop: int) -> Tensor:
    """Contiguous row slice along axis 0."""
    a = _as_tensor(a)
    if not (0 <= start <= stop <= a.shape[0]):
        raise DimensionError(f"row slice [{start}:{stop}] out of range for shape {a.shape}")

    def grad(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return full

    return _emit(a.tape, a.data[start:stop].copy(), [(a, grad)])


def concat_rows(parts) -> Tensor:
    """Concatenate tensors along axis 0."""
    parts = [_as_tensor(p) for p in parts]
    tape = _shared_tape(*parts)
    data = np.concatenate([p.data for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.shape[0] for p in parts])
    pairs = []
    for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
        pairs.append((p, lambda g, lo=lo, hi=hi: np.asarray(g)[lo:hi]))
    return _emit(tape, data, pairs)


# ---------------------------------------------------------------------------
# fused classification loss


def softmax_cross_entropy(logits, targets, weights: np.ndarray | None = None) -> Tensor:
    """Batch-mean cross-entropy between softmax(logits) and one-hot targets.

    Stabilized by row-max subtraction. ``weights`` optionally scales each
    sample's term (still normalized by the full batch size B), which is how
    the confidence-masked consistency loss reuses this primitive. The
    gradient is weights * (softmax - targets) / B.
    """
    logits = _as_tensor(logits)
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=np.float64)
    if logits.data.ndim != 2 or t.shape != logits.shape:
        raise DimensionError(
            f"softmax_cross_entropy: logits {logits.shape} vs targets {t.shape}"
        )
    if not np.all((t == 0.0) | (t == 1.0)) or not np.all(t.sum(axis=1) == 1.0):
        raise ContractError("targets must be one-hot rows")
    batch = logits.shape[0]
    w = np.ones(batch) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (batch,):
        raise DimensionError(f"weights shape {w.shape} does not match batch {batch}")

    x = logits.data
    shifted = x - x.max(axis=1, keepdims=True)
    expx = np.exp(shifted)
    soft = expx / expx.sum(axis=1, keepdims=True)
    logp = shifted - np.log(expx.sum(axis=1, keepdims=True))
    per_sample = -(t * logp).sum(axis=1)
    loss = float((w * per_sample).sum() / batch)

    def grad(g):
        return (g * w[:, None]) * (soft - t) / batch

    return _emit(logits.tape, np.float64(loss), [(logits, grad)])
