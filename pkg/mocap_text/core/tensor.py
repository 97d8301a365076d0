"""
Dense float64 tensors with tape-based reverse-mode differentiation.

A tensor joins a graph when a ``GradientTape`` watches it. Every op that has a
watched input records one node on that tape; ops on untracked tensors return
plain values and record nothing, so inference never pays for the tape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from mocap_text.exceptions import DimensionError, TapeStateError

VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """Row-major float64 buffer, optionally linked to a gradient tape"""

    __slots__ = ("data", "node_id", "tape")
    # make ndarray <op> Tensor dispatch to the reflected Tensor operator
    __array_ufunc__ = None

    def __init__(
        self,
        data,
        node_id: Optional[int] = None,
        tape: Optional["GradientTape"] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.node_id = node_id
        self.tape = tape

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"<Tensor(shape={self.shape}, tracked={self.tracked})>"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class TapeNode:
    """One recorded op: output id, input ids, and the vector-Jacobian product"""

    node_id: int
    input_ids: Tuple[Optional[int], ...]
    vjp: VJP


class GradientTape:
    """
    Ordered record of the ops of one forward pass.

    Nodes are appended as ops run, so every node's inputs precede it. The tape
    supports exactly one backward pass; recording or differentiating after that
    raises ``TapeStateError``.
    """

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self._shapes: List[Tuple[int, ...]] = []
        self._leaves: List[int] = []
        self._finished = False

    @property
    def leaves(self) -> List[int]:
        return list(self._leaves)

    def _allocate(self, shape: Tuple[int, ...]) -> int:
        if self._finished:
            raise TapeStateError("tape already ran backward; start a new tape")
        self._shapes.append(tuple(shape))
        return len(self._shapes) - 1

    def watch(self, value) -> Tensor:
        """Register a leaf and return its tracked tensor"""
        data = value.data if isinstance(value, Tensor) else value
        data = np.asarray(data, dtype=np.float64)
        node_id = self._allocate(data.shape)
        self._leaves.append(node_id)
        return Tensor(data, node_id=node_id, tape=self)

    def record(
        self, data: np.ndarray, inputs: Sequence[Tensor], vjp: VJP
    ) -> Tensor:
        node_id = self._allocate(data.shape)
        input_ids = tuple(t.node_id if t.tape is self else None for t in inputs)
        self.nodes.append(TapeNode(node_id, input_ids, vjp))
        return Tensor(data, node_id=node_id, tape=self)

    def gradient(self, loss: Tensor) -> Dict[int, Tensor]:
        """
        Accumulate gradients of a scalar loss in reverse recording order.

        Args:
            loss (Tensor): Scalar recorded on this tape

        Returns:
            Dict[int, Tensor]: Gradient per leaf node id, zeros for unused leaves

        Raises:
            TapeStateError: If the loss belongs to another tape or backward already ran
        """
        if loss.tape is not self:
            raise TapeStateError("loss was not recorded on this tape")
        if self._finished:
            raise TapeStateError("backward already ran on this tape")
        if loss.data.size != 1:
            raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._finished = True

        grads: Dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(node.node_id, None)
            if g is None:
                continue
            for input_id, input_grad in zip(node.input_ids, node.vjp(g)):
                if input_id is None or input_grad is None:
                    continue
                if input_id in grads:
                    grads[input_id] = grads[input_id] + input_grad
                else:
                    grads[input_id] = input_grad

        return {
            leaf: Tensor(grads.get(leaf, np.zeros(self._shapes[leaf])))
            for leaf in self._leaves
        }


def backward(loss: Tensor) -> Dict[int, Tensor]:
    """
    Run reverse-mode differentiation from a tracked scalar.

    Args:
        loss (Tensor): Scalar produced from watched tensors

    Returns:
        Dict[int, Tensor]: Gradient per leaf node id

    Raises:
        TapeStateError: If the loss is not tracked
    """
    if not isinstance(loss, Tensor) or loss.tape is None:
        raise TapeStateError("backward called on an untracked tensor")
    return loss.tape.gradient(loss)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _emit(data: np.ndarray, inputs: Sequence[Tensor], vjp: VJP) -> Tensor:
    tape = None
    for t in inputs:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise TapeStateError("op inputs belong to different tapes")
    if tape is None:
        return Tensor(data)
    return tape.record(data, inputs, vjp)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op} shape mismatch: {a.shape} and {b.shape}")


# Linear algebra


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul batch mismatch: {a.shape} @ {b.shape}")
    a_data, b_data = a.data, b.data

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b_data, -1, -2))
        gb = np.matmul(np.swapaxes(a_data, -1, -2), g)
        return _unbroadcast(ga, a_data.shape), _unbroadcast(gb, b_data.shape)

    return _emit(out, (a, b), vjp)


# Elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    a_shape, b_shape = a.shape, b.shape
    return _emit(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    a_shape, b_shape = a.shape, b.shape
    return _emit(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    a_data, b_data = a.data, b.data
    return _emit(
        a_data * b_data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b_data, a_data.shape),
            _unbroadcast(g * a_data, b_data.shape),
        ),
    )


def neg(x) -> Tensor:
    x = as_tensor(x)
    return _emit(-x.data, (x,), lambda g: (-g,))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _emit(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # tanh form never overflows and gives exactly 0.5 at 0
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _emit(y, (x,), lambda g: (g * y * (1.0 - y),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _emit(y, (x,), lambda g: (g * y,))


def log(x) -> Tensor:
    x = as_tensor(x)
    x_data = x.data
    return _emit(np.log(x_data), (x,), lambda g: (g / x_data,))


def clip_max(x, bound) -> Tensor:
    """Elementwise min(x, bound) with a constant bound"""
    x = as_tensor(x)
    bound = np.asarray(bound, dtype=np.float64)
    keep = x.data <= bound
    return _emit(np.minimum(x.data, bound), (x,), lambda g: (g * keep,))


def masked_fill(x, keep: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``keep`` is False; they receive no gradient"""
    x = as_tensor(x)
    keep = np.broadcast_to(np.asarray(keep, dtype=bool), x.shape)
    return _emit(np.where(keep, x.data, value), (x,), lambda g: (g * keep,))


# Shape ops


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat shape mismatch along axis {axis}: {shapes}")
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _emit(out, tensors, lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"stack shape mismatch: {shapes}")
    count = len(tensors)
    return _emit(
        out, tensors, lambda g: tuple(np.take(g, i, axis=axis) for i in range(count))
    )


def reshape(x, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    original = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {original} into {shape}")
    return _emit(out, (x,), lambda g: (g.reshape(original),))


def swapaxes(x, axis1: int, axis2: int) -> Tensor:
    x = as_tensor(x)
    return _emit(
        np.swapaxes(x.data, axis1, axis2),
        (x,),
        lambda g: (np.swapaxes(g, axis1, axis2),),
    )


def select(x, index: int, axis: int) -> Tensor:
    """Take one slice along ``axis``, dropping that axis"""
    x = as_tensor(x)
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape)
        where = [slice(None)] * len(shape)
        where[axis] = index
        full[tuple(where)] = g
        return (full,)

    return _emit(np.take(x.data, index, axis=axis), (x,), vjp)


def take(table, indices) -> Tensor:
    """Row lookup ``table[indices]`` (embedding gather)"""
    table = as_tensor(table)
    indices = np.asarray(indices, dtype=np.int64)
    shape = table.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, indices, g)
        return (full,)

    return _emit(table.data[indices], (table,), vjp)


def pick(x, indices) -> Tensor:
    """Pick one entry per row along the last axis"""
    x = as_tensor(x)
    indices = np.asarray(indices, dtype=np.int64)[..., None]
    if indices.shape[:-1] != x.shape[:-1]:
        raise DimensionError(f"pick index shape {indices.shape[:-1]} vs {x.shape}")
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape)
        np.put_along_axis(full, indices, g[..., None], axis=-1)
        return (full,)

    return _emit(np.take_along_axis(x.data, indices, axis=-1)[..., 0], (x,), vjp)


# Reductions


def sum(x, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    shape = x.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit(x.data.sum(axis=axis, keepdims=keepdims), (x,), vjp)


def mean(x, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def softmax(v, axis: int = -1) -> Tensor:
    """Max-subtracted softmax; ``-inf`` entries get exactly zero weight"""
    v = as_tensor(v)
    if v.data.size == 0 or v.shape[axis] == 0:
        raise DimensionError("softmax of an empty vector")
    shifted = v.data - v.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    return _emit(
        y, (v,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),)
    )


def log_softmax(v, axis: int = -1) -> Tensor:
    v = as_tensor(v)
    if v.data.size == 0 or v.shape[axis] == 0:
        raise DimensionError("log_softmax of an empty vector")
    shifted = v.data - v.data.max(axis=axis, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(y)
    return _emit(
        y, (v,), lambda g: (g - probs * g.sum(axis=axis, keepdims=True),)
    )


_ELEMENTWISE_OPS: Dict[str, Callable[..., Tensor]] = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "exp": exp,
    "add": add,
    "mul": mul,
}


def elementwise(op: str, *args, axis: int = -1) -> Tensor:
    """Apply a named elementwise op; ``concat`` joins its args along ``axis``"""
    if op == "concat":
        return concat(args, axis=axis)
    fn = _ELEMENTWISE_OPS.get(op)
    if fn is None:
        raise ValueError(f"Unsupported elementwise op: {op}")
    return fn(*args)


def supported_elementwise_ops() -> List[str]:
    return list(_ELEMENTWISE_OPS) + ["concat"]


PointLike = Union[np.ndarray, Tensor, Mapping[str, np.ndarray]]


def grad_check(f: Callable, point: PointLike, h: float = 1e-5) -> float:
    """
    Compare tape gradients of ``f`` against central finite differences.

    Args:
        f (Callable): Scalar-valued function of a Tensor, or of a dict of Tensors
            when ``point`` is a mapping
        point (PointLike): Where to differentiate
        h (float): Finite-difference step

    Returns:
        float: max |analytic - numeric| / max(1, |analytic|) over all
            coordinates; ``inf`` if any evaluation is non-finite
    """
    named = isinstance(point, Mapping)
    if named:
        values = {k: np.array(as_tensor(v).data, dtype=np.float64) for k, v in point.items()}
    else:
        values = {"x": np.array(as_tensor(point).data, dtype=np.float64)}

    def call(args: Dict[str, Tensor]) -> Tensor:
        out = as_tensor(f(args if named else args["x"]))
        if out.data.size != 1:
            raise DimensionError(f"grad_check needs a scalar function, got {out.shape}")
        return out

    def evaluate() -> float:
        return call({k: Tensor(v.copy()) for k, v in values.items()}).item()

    tape = GradientTape()
    watched = {k: tape.watch(v.copy()) for k, v in values.items()}
    out = call(watched)
    if not np.all(np.isfinite(out.data)):
        return float("inf")
    grads = backward(out) if out.tape is tape else {}

    worst = 0.0
    for name, value in values.items():
        leaf = watched[name].node_id
        analytic = grads[leaf].data if leaf in grads else np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            original = value[idx]
            value[idx] = original + h
            f_plus = evaluate()
            value[idx] = original - h
            f_minus = evaluate()
            value[idx] = original
            numeric = (f_plus - f_minus) / (2.0 * h)
            if not (np.isfinite(numeric) and np.isfinite(analytic[idx])):
                return float("inf")
            error = abs(analytic[idx] - numeric) / max(1.0, abs(analytic[idx]))
            worst = max(worst, error)
    return worst
