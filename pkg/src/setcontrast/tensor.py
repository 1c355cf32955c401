"""Dense float64 tensors with a reverse-mode differentiation tape.

Everything is 2-D: scalars are stored as (1, 1), vectors as (1, n) or
(n, 1). A Tape records primitive applications in execution order;
``Tape.backward`` replays them in reverse and accumulates a gradient for
every registered leaf. Tapes are rebuilt for each forward pass and are
not thread-safe; Tensors themselves are immutable values and can be
shared freely.

Gradient conventions for the non-smooth primitives: ``relu`` uses the
zero subgradient at 0, ``row_min``/``row_max`` route the incoming
gradient to the first index attaining the extremum.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import ContractError, DegenerateInputError, EvaluationError, ShapeError

Array = np.ndarray


def _freeze(arr: Array) -> Array:
    arr.flags.writeable = False
    return arr


def _coerce(data) -> Array:
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"tensors are 1-D or 2-D, got ndim={arr.ndim}")
    return arr


class _Node:
    """One recorded primitive application."""

    __slots__ = ("tape", "idx", "parents", "vjp")

    def __init__(self, tape: "Tape", idx: int, parents, vjp):
        self.tape = tape
        self.idx = idx
        self.parents = parents  # tuple of node indices, None for constants
        self.vjp = vjp  # grad_out -> sequence of parent grads (or None)


class Tensor:
    """Immutable 2-D float64 array, optionally recorded on a tape."""

    __slots__ = ("data", "node")

    def __init__(self, data):
        arr = _coerce(data)
        if not np.all(np.isfinite(arr)):
            raise EvaluationError("tensor data contains NaN or Inf")
        self.data = _freeze(arr)
        self.node = None

    @classmethod
    def _raw(cls, arr: Array, node: Optional[_Node]) -> "Tensor":
        t = object.__new__(cls)
        t.data = _freeze(np.ascontiguousarray(arr, dtype=np.float64))
        t.node = node
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def tracked(self) -> bool:
        return self.node is not None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, shape={self.shape}")
        return float(self.data.reshape(()))

    # -- operator sugar; all routing goes through the module-level primitives
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise ShapeError("tensor division supports scalar divisors only")
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self) -> "Tensor":
        return total_sum(self)

    def relu(self) -> "Tensor":
        return relu(self)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def sqrt(self) -> "Tensor":
        return sqrt(self)

    def __repr__(self) -> str:
        tag = "tracked" if self.tracked else "const"
        return f"Tensor(shape={self.shape}, {tag})\n{self.data!r}"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Gradients:
    """Result of Tape.backward: gradients keyed by leaf."""

    def __init__(self, by_id: dict):
        self._by_id = by_id

    def __getitem__(self, key) -> Tensor:
        if isinstance(key, Tensor):
            if key.node is None:
                raise ContractError("tensor is not tracked on any tape")
            key = key.node.idx
        return self._by_id[key]

    def __contains__(self, key) -> bool:
        if isinstance(key, Tensor):
            key = key.node.idx if key.node is not None else -1
        return key in self._by_id


class Tape:
    """Records primitive applications for one forward pass."""

    def __init__(self):
        self._nodes: list = []
        self._leaf_shapes: dict = {}
        self.flags: set = set()  # e.g. "degenerate-eigenvalues"

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, parents, vjp) -> _Node:
        node = _Node(self, len(self._nodes), parents, vjp)
        self._nodes.append(node)
        return node

    def leaf(self, data) -> Tensor:
        """Register data as a differentiable leaf."""
        t = Tensor(data)  # validates finiteness, copies
        node = self._record((), None)
        self._leaf_shapes[node.idx] = t.data.shape
        return Tensor._raw(t.data, node)

    def backward(self, loss: Tensor) -> Gradients:
        """Reverse sweep from a scalar loss; returns gradients for every
        leaf (zeros for leaves the loss does not depend on)."""
        if loss.node is None or loss.node.tape is not self:
            raise ContractError("loss is not recorded on this tape")
        if loss.shape != (1, 1):
            raise ShapeError(f"backward needs a scalar loss, shape={loss.shape}")
        adjoint: list = [None] * len(self._nodes)
        adjoint[loss.node.idx] = np.ones((1, 1))
        for node in reversed(self._nodes[: loss.node.idx + 1]):
            g = adjoint[node.idx]
            if g is None or node.vjp is None:
                continue
            for pid, pg in zip(node.parents, node.vjp(g)):
                if pid is None or pg is None:
                    continue
                if adjoint[pid] is None:
                    adjoint[pid] = pg
                else:
                    adjoint[pid] = adjoint[pid] + pg
        out = {}
        for idx, shape in self._leaf_shapes.items():
            g = adjoint[idx]
            if g is None:
                g = np.zeros(shape)
            out[idx] = Tensor._raw(np.array(g), None)
        return Gradients(out)


def _common_tape(operands: Sequence[Tensor]) -> Optional[Tape]:
    tape = None
    for t in operands:
        if t.node is None:
            continue
        if tape is None:
            tape = t.node.tape
        elif tape is not t.node.tape:
            raise ContractError("operands were recorded on different tapes")
    return tape


def _emit(operands: Sequence[Tensor], value: Array, vjp) -> Tensor:
    """Wrap a primitive result; records a node when any operand is tracked."""
    tape = _common_tape(operands)
    if tape is None:
        return Tensor._raw(value, None)
    parents = tuple(t.node.idx if t.node is not None else None for t in operands)
    return Tensor._raw(value, tape._record(parents, vjp))


def custom_op(operands: Iterable, value: Array, vjp: Callable) -> Tensor:
    """Register a domain primitive: ``vjp(grad_out)`` must return one
    gradient array (or None) per operand, each matching its shape."""
    ops = tuple(as_tensor(t) for t in operands)
    return _emit(ops, np.asarray(value, dtype=np.float64), vjp)


def active_tape(*tensors) -> Optional[Tape]:
    """Tape shared by the given tensors, or None if all are constants."""
    return _common_tape([t for t in tensors if isinstance(t, Tensor)])


# ---------------------------------------------------------------------------
# broadcasting helpers (2-D only: a dimension may be 1 on either side)

def _broadcast_check(sa: tuple, sb: tuple, opname: str) -> None:
    for da, db in zip(sa, sb):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"{opname}: shapes {sa} and {sb} do not broadcast")


def _unbroadcast(g: Array, shape: tuple) -> Array:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitives

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a.shape, b.shape, "add")
    sa, sb = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _emit((a, b), a.data + b.data, vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a.shape, b.shape, "sub")
    sa, sb = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _emit((a, b), a.data - b.data, vjp)


def mul(a, b) -> Tensor:
    """Elementwise product (with 2-D broadcasting)."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a.shape, b.shape, "mul")
    da, db = a.data, b.data

    def vjp(g):
        return _unbroadcast(g * db, da.shape), _unbroadcast(g * da, db.shape)

    return _emit((a, b), da * db, vjp)


def scale(a, s: float) -> Tensor:
    a = as_tensor(a)
    s = float(s)

    def vjp(g):
        return (g * s,)

    return _emit((a,), a.data * s, vjp)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    da, db = a.data, b.data

    def vjp(g):
        return g @ db.T, da.T @ g

    return _emit((a, b), da @ db, vjp)


def transpose(a) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (g.T,)

    return _emit((a,), a.data.T.copy(), vjp)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _emit((a,), out, vjp)


def log(a) -> Tensor:
    a = as_tensor(a)
    da = a.data

    def vjp(g):
        return (g / da,)

    return _emit((a,), np.log(da), vjp)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def vjp(g):
        return (g / (2.0 * out),)

    return _emit((a,), out, vjp)


def relu(a) -> Tensor:
    a = as_tensor(a)
    da = a.data

    def vjp(g):
        return (g * (da > 0.0),)

    return _emit((a,), np.maximum(da, 0.0), vjp)


def softplus(a) -> Tensor:
    """log(1 + exp(x)), evaluated without overflow."""
    a = as_tensor(a)
    da = a.data

    def vjp(g):
        # sigmoid via tanh keeps both tails stable
        return (g * (0.5 * (1.0 + np.tanh(0.5 * da))),)

    return _emit((a,), np.logaddexp(0.0, da), vjp)


def total_sum(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        return (np.full(shape, float(g.reshape(()))),)

    return _emit((a,), a.data.sum().reshape(1, 1), vjp)


def row_sum(a) -> Tensor:
    a = as_tensor(a)
    cols = a.shape[1]

    def vjp(g):
        return (np.repeat(g, cols, axis=1),)

    return _emit((a,), a.data.sum(axis=1, keepdims=True), vjp)


def _row_extremum(a, argfn, reducefn) -> Tensor:
    a = as_tensor(a)
    da = a.data
    idx = argfn(da, axis=1)  # first attaining index per row

    def vjp(g):
        out = np.zeros_like(da)
        out[np.arange(da.shape[0]), idx] = g[:, 0]
        return (out,)

    return _emit((a,), reducefn(da, axis=1).reshape(-1, 1), vjp)


def row_min(a) -> Tensor:
    """Per-row minimum, (N, 1); gradient goes to the first attaining index."""
    return _row_extremum(a, np.argmin, np.min)


def row_max(a) -> Tensor:
    """Per-row maximum, (N, 1); gradient goes to the first attaining index."""
    return _row_extremum(a, np.argmax, np.max)


def row_l2_normalize(a) -> Tensor:
    a = as_tensor(a)
    da = a.data
    norms = np.sqrt((da * da).sum(axis=1, keepdims=True))
    if np.any(norms == 0.0):
        raise DegenerateInputError("row_l2_normalize: zero row has no direction")
    out = da / norms

    def vjp(g):
        # d(x/||x||) = (g - (g.y) y) / ||x|| per row
        inner = (g * out).sum(axis=1, keepdims=True)
        return ((g - inner * out) / norms,)

    return _emit((a,), out, vjp)


def flip_rows(a) -> Tensor:
    """Reverse row order; the adjoint is the same flip."""
    a = as_tensor(a)

    def vjp(g):
        return (g[::-1].copy(),)

    return _emit((a,), a.data[::-1].copy(), vjp)


def pairwise_dist(a, b) -> Tensor:
    """Euclidean distance matrix D[i, j] = ||a_i - b_j||, built from
    explicit difference vectors.

    Zero-distance pairs (including the diagonal of a self-distance
    matrix) get zero gradient: the norm has no direction there.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"pairwise_dist: feature dims differ, {a.shape} vs {b.shape}")
    da, db = a.data, b.data
    diff = da[:, None, :] - db[None, :, :]  # (N, M, E)
    dist = np.sqrt((diff * diff).sum(axis=2))

    def vjp(g):
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(dist > 0.0, g / dist, 0.0)
        ga = w.sum(axis=1, keepdims=True) * da - w @ db
        gb = w.sum(axis=0)[:, None] * db - w.T @ da
        return ga, gb

    return _emit((a, b), dist, vjp)


# ---------------------------------------------------------------------------
# finite-difference gradient checking

def _scalar_eval(f, x: Array) -> float:
    y = f(Tensor(x))
    val = y.item() if isinstance(y, Tensor) else float(y)
    if not np.isfinite(val):
        raise EvaluationError("gradcheck: function value is not finite")
    return val


def gradcheck(f, x, eps: float = 1e-6) -> float:
    """Max over coordinates of |analytic - central difference| scaled by
    max(1, |analytic|). ``f`` maps one Tensor to a scalar."""
    base = as_tensor(x).data
    tape = Tape()
    xt = tape.leaf(base)
    y = f(xt)
    if not isinstance(y, Tensor) or y.shape != (1, 1):
        raise ContractError("gradcheck: f must return a scalar Tensor")
    if not np.isfinite(y.item()):
        raise EvaluationError("gradcheck: function value is not finite")
    analytic = tape.backward(y)[xt].data
    worst = 0.0
    pert = np.array(base)
    for i in range(base.shape[0]):
        for j in range(base.shape[1]):
            orig = pert[i, j]
            pert[i, j] = orig + eps
            fp = _scalar_eval(f, pert)
            pert[i, j] = orig - eps
            fm = _scalar_eval(f, pert)
            pert[i, j] = orig
            num = (fp - fm) / (2.0 * eps)
            err = abs(analytic[i, j] - num) / max(1.0, abs(analytic[i, j]))
            worst = max(worst, err)
    return worst
