"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every differentiable operation appends a node to a :class:`Tape`.  The
vector-Jacobian products are themselves written with tensor operations, so
running :func:`backward` with ``create_graph=True`` records the backward pass
on the same tape and the resulting gradients can be differentiated again
(this is what the gradient penalty needs).

Usage::

    with Tape():
        x = Tensor([3.0], requires_grad=True)
        y = (x * x).sum()
        (gx,) = grad(y, [x])     # 6.0
"""

from __future__ import annotations

import itertools
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, DomainError, UsageError

LOG_EPS = 1e-12
SQRT_EPS = 1e-12

_generation = itertools.count()
_local = threading.local()


class Node:
    __slots__ = ("id", "op", "parents", "out", "fwd", "vjp")

    def __init__(self, id, op, parents, out, fwd, vjp):
        self.id = id
        self.op = op
        self.parents = parents
        self.out = out
        self.fwd = fwd
        self.vjp = vjp

    @property
    def parent_ids(self) -> tuple[int, ...]:
        return tuple(p.node for p in self.parents if p.node is not None)


class Tape:
    """Append-only record of the operations that produced tensors.

    Node ids are assigned in creation order, so the parents of node ``i``
    always have ids below ``i``.  A tape can be used as a context manager to
    make it the default for new leaves on the current thread.
    """

    def __init__(self, higher_order: bool = True):
        self.nodes: list[Node] = []
        self.generation = next(_generation)
        self.higher_order = higher_order

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()

    def _record(self, op, parents, out, fwd, vjp) -> int:
        nid = len(self.nodes)
        self.nodes.append(Node(nid, op, parents, out, fwd, vjp))
        return nid

    def leaf(self, data) -> "Tensor":
        return Tensor(data, requires_grad=True, tape=self)

    def count(self, op: str) -> int:
        return sum(1 for n in self.nodes if n.op == op)

    def replay(self) -> bool:
        """Recompute every non-leaf node from its parents' stored values.

        Returns True when every recomputed value is bitwise equal to the
        stored one.
        """
        for node in self.nodes:
            if node.fwd is None:
                continue
            again = node.fwd(*(p.data for p in node.parents))
            if not np.array_equal(again, node.out.data):
                return False
        return True


def _stack() -> list[Tape]:
    st = getattr(_local, "stack", None)
    if st is None:
        st = _local.stack = []
    return st


def current_tape() -> Tape:
    """The innermost active tape on this thread (a per-thread default if none)."""
    st = _stack()
    if st:
        return st[-1]
    default = getattr(_local, "default", None)
    if default is None:
        default = _local.default = Tape()
    return default


class Tensor:
    __slots__ = ("data", "requires_grad", "tape", "node", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, tape: Tape | None = None):
        arr = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) else data
        if arr.dtype != np.float64:
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.tape = None
        self.node = None
        if self.requires_grad:
            self.tape = tape if tape is not None else current_tape()
            self.node = self.tape._record("leaf", (), self, None, None)

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = f", node={self.node}" if self.node is not None else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operator sugar ---------------------------------------------------
    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, c):
        return power(self, c)

    def __matmul__(self, o):
        return matmul(self, o)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def zeros_like(t: Tensor) -> Tensor:
    return Tensor(np.zeros_like(t.data))


def ones_like(t: Tensor) -> Tensor:
    return Tensor(np.ones_like(t.data))


# ---------------------------------------------------------------------------
# recording machinery

VJP = Callable[[Tensor, tuple, Tensor, tuple], tuple]


def _wrap(data) -> Tensor:
    """Constant tensor around an array that is already float64 (no copy)."""
    t = object.__new__(Tensor)
    t.data = data if type(data) is np.ndarray else np.asarray(data, dtype=np.float64)
    t.requires_grad = False
    t.tape = None
    t.node = None
    return t


def _apply(op: str, fwd: Callable[..., np.ndarray], parents: Sequence[Tensor], vjp: VJP) -> Tensor:
    out = _wrap(fwd(*[p.data for p in parents]))
    tape = None
    for p in parents:
        if p.requires_grad:
            if tape is None:
                tape = p.tape
            elif p.tape is not tape:
                raise UsageError(f"{op}: operands live on different tapes")
    if tape is not None:
        out.requires_grad = True
        out.tape = tape
        out.node = tape._record(op, tuple(parents), out, fwd, vjp)
    return out


def _bshape(op: str, a: np.ndarray, b: np.ndarray) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


def _unbroadcast(arr: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if arr.shape == shape:
        return arr
    lead = arr.ndim - len(shape)
    if lead > 0:
        arr = arr.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and arr.shape[i] != 1)
    if axes:
        arr = arr.sum(axis=axes, keepdims=True)
    return arr.reshape(shape)


def sum_to(t: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Sum a broadcast result back down to ``shape``."""
    shape = tuple(shape)
    if t.shape == shape:
        return t
    src = t.shape
    return _apply(
        "sum_to",
        lambda a: _unbroadcast(a, shape),
        (t,),
        lambda g, ps, out, needs: (broadcast_to(g, src),),
    )


def broadcast_to(t: Tensor, shape: tuple[int, ...]) -> Tensor:
    shape = tuple(shape)
    if t.shape == shape:
        return t
    src = t.shape
    return _apply(
        "broadcast_to",
        lambda a: np.broadcast_to(a, shape).copy(),
        (t,),
        lambda g, ps, out, needs: (sum_to(g, src),),
    )


# ---------------------------------------------------------------------------
# elementwise binary

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _bshape("add", a.data, b.data)
    return _apply(
        "add",
        np.add,
        (a, b),
        lambda g, ps, out, needs: (
            sum_to(g, ps[0].shape) if needs[0] else None,
            sum_to(g, ps[1].shape) if needs[1] else None,
        ),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _bshape("sub", a.data, b.data)
    return _apply(
        "sub",
        np.subtract,
        (a, b),
        lambda g, ps, out, needs: (
            sum_to(g, ps[0].shape) if needs[0] else None,
            sum_to(neg(g), ps[1].shape) if needs[1] else None,
        ),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _bshape("mul", a.data, b.data)
    return _apply(
        "mul",
        np.multiply,
        (a, b),
        lambda g, ps, out, needs: (
            sum_to(mul(g, ps[1]), ps[0].shape) if needs[0] else None,
            sum_to(mul(g, ps[0]), ps[1].shape) if needs[1] else None,
        ),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _bshape("div", a.data, b.data)
    return _apply(
        "div",
        np.divide,
        (a, b),
        lambda g, ps, out, needs: (
            sum_to(div(g, ps[1]), ps[0].shape) if needs[0] else None,
            sum_to(neg(div(mul(g, ps[0]), mul(ps[1], ps[1]))), ps[1].shape) if needs[1] else None,
        ),
    )


# ---------------------------------------------------------------------------
# elementwise unary

def neg(a) -> Tensor:
    a = as_tensor(a)
    return _apply("neg", np.negative, (a,), lambda g, ps, out, needs: (neg(g),))


def power(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def vjp(g, ps, out, needs):
        if c == 1.0:
            return (g,)
        if c == 2.0:
            return (mul(g, mul(ps[0], 2.0)),)
        return (mul(g, mul(power(ps[0], c - 1.0), c)),)

    return _apply("pow", lambda x: np.power(x, c), (a,), vjp)


def exp(a) -> Tensor:
    a = as_tensor(a)
    return _apply("exp", np.exp, (a,), lambda g, ps, out, needs: (mul(g, out),))


def log(a, eps: float = LOG_EPS) -> Tensor:
    """Natural log of ``a + eps``.  With ``eps=0`` non-positive inputs raise."""
    a = as_tensor(a)
    if np.any(a.data + eps <= 0.0):
        raise DomainError("log of a non-positive value" + ("" if eps else " (guard disabled)"))
    if eps:
        return _apply(
            "log",
            lambda x: np.log(x + eps),
            (a,),
            lambda g, ps, out, needs: (div(g, add(ps[0], eps)),),
        )
    return _apply("log", np.log, (a,), lambda g, ps, out, needs: (div(g, ps[0]),))


def sqrt(a) -> Tensor:
    """Square root whose derivative is guarded where the output is exactly 0."""
    a = as_tensor(a)
    if np.any(a.data < 0.0):
        raise DomainError("sqrt of a negative value")

    def vjp(g, ps, out, needs):
        guard = np.where(out.data == 0.0, SQRT_EPS, 0.0)
        return (div(mul(g, 0.5), add(out, guard)),)

    return _apply("sqrt", np.sqrt, (a,), vjp)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    return _apply(
        "tanh", np.tanh, (a,), lambda g, ps, out, needs: (mul(g, sub(1.0, mul(out, out))),)
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    return _apply(
        "sigmoid", _sigmoid, (a,), lambda g, ps, out, needs: (mul(g, mul(out, sub(1.0, out))),)
    )


def log_sigmoid(a) -> Tensor:
    """``log(sigmoid(a))`` without overflow or an epsilon guard."""
    a = as_tensor(a)
    return _apply(
        "log_sigmoid",
        lambda x: -np.logaddexp(0.0, -x),
        (a,),
        lambda g, ps, out, needs: (mul(g, sigmoid(neg(ps[0]))),),
    )


def relu(a) -> Tensor:
    return leaky_relu(a, 0.0)


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    slope = float(slope)

    if 0.0 <= slope <= 1.0:
        def fwd(x):
            return np.maximum(x, slope * x)
    else:
        def fwd(x):
            return np.where(x > 0.0, x, slope * x)

    def vjp(g, ps, out, needs):
        return (mul(g, np.where(ps[0].data > 0.0, 1.0, slope)),)

    return _apply("relu" if slope == 0.0 else "leaky_relu", fwd, (a,), vjp)


def elementwise(op: str, a, b=None, **kw) -> Tensor:
    """Dispatch an elementwise operation by name."""
    binary = {"add": add, "sub": sub, "mul": mul, "div": div}
    unary = {
        "exp": exp, "log": log, "sqrt": sqrt, "tanh": tanh, "sigmoid": sigmoid,
        "relu": relu, "leaky_relu": leaky_relu, "pow": power, "neg": neg,
    }
    if op in binary:
        if b is None:
            raise UsageError(f"{op} needs two operands")
        return binary[op](a, b)
    if op in unary:
        if op == "pow":
            return power(a, kw.get("c", b))
        if op == "leaky_relu":
            return leaky_relu(a, kw.get("slope", 0.2 if b is None else b))
        return unary[op](a, **kw)
    raise UsageError(f"unknown elementwise op '{op}'")


# ---------------------------------------------------------------------------
# shape ops

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    src = a.shape
    if int(np.prod(shape)) != a.size:
        raise DimensionError(f"cannot reshape {src} to {shape}")
    return _apply(
        "reshape",
        lambda x: x.reshape(shape),
        (a,),
        lambda g, ps, out, needs: (reshape(g, src),),
    )


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.shape}")
    return _apply(
        "transpose",
        lambda x: x.T,
        (a,),
        lambda g, ps, out, needs: (transpose(g),),
    )


def slice_axis(a, axis: int, start: int, stop: int) -> Tensor:
    """``a[..., start:stop, ...]`` along ``axis``."""
    a = as_tensor(a)
    axis = axis % a.ndim
    src = a.shape
    idx = (slice(None),) * axis + (slice(start, stop),)
    return _apply(
        "slice",
        lambda x: x[idx].copy(),
        (a,),
        lambda g, ps, out, needs: (embed(g, src, axis, start, stop),),
    )


def embed(a, shape, axis: int, start: int, stop: int) -> Tensor:
    """Place ``a`` into a zero tensor of ``shape`` at ``start:stop`` along ``axis``."""
    a = as_tensor(a)
    shape = tuple(shape)
    idx = (slice(None),) * axis + (slice(start, stop),)

    def fwd(x):
        z = np.zeros(shape)
        z[idx] = x
        return z

    return _apply(
        "embed", fwd, (a,), lambda g, ps, out, needs: (slice_axis(g, axis, start, stop),)
    )


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise DimensionError("concat of nothing")
    nd = ts[0].ndim
    axis = axis % nd
    for t in ts[1:]:
        if t.ndim != nd or any(
            t.shape[i] != ts[0].shape[i] for i in range(nd) if i != axis
        ):
            raise DimensionError(
                f"concat: shapes {[t.shape for t in ts]} differ off axis {axis}"
            )
    bounds = np.cumsum([0] + [t.shape[axis] for t in ts])

    def vjp(g, ps, out, needs):
        return tuple(
            slice_axis(g, axis, int(bounds[i]), int(bounds[i + 1])) if needs[i] else None
            for i in range(len(ps))
        )

    return _apply("concat", lambda *xs: np.concatenate(xs, axis=axis), ts, vjp)


# ---------------------------------------------------------------------------
# linear algebra and reductions

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects matrices, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    return _apply(
        "matmul",
        np.matmul,
        (a, b),
        lambda g, ps, out, needs: (
            matmul(g, transpose(ps[1])) if needs[0] else None,
            matmul(transpose(ps[0]), g) if needs[1] else None,
        ),
    )


def affine(x, w, b) -> Tensor:
    """``x @ w + b`` as one node (``b`` broadcast over rows)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"affine: cannot multiply {x.shape} by {w.shape}")
    if b.shape != (w.shape[1],):
        raise DimensionError(f"affine: bias shape {b.shape} does not match {w.shape}")

    def fwd(xd, wd, bd):
        out = xd @ wd
        out += bd
        return out

    def vjp(g, ps, out, needs):
        return (
            matmul(g, transpose(ps[1])) if needs[0] else None,
            matmul(transpose(ps[0]), g) if needs[1] else None,
            tsum(g, axis=0) if needs[2] else None,
        )

    return _apply("affine", fwd, (x, w, b), vjp)


def _kept_shape(shape, axis) -> tuple[int, ...]:
    if axis is None:
        return (1,) * len(shape)
    return tuple(1 if i == axis else n for i, n in enumerate(shape))


def tsum(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if a.size == 0:
        raise DomainError("reduction over an empty tensor")
    if axis is not None:
        if not -a.ndim <= axis < a.ndim:
            raise DimensionError(f"axis {axis} out of range for rank {a.ndim}")
        axis = axis % a.ndim
    src = a.shape
    kept = _kept_shape(src, axis)

    def vjp(g, ps, out, needs):
        return (broadcast_to(reshape(g, kept), src),)

    return _apply("sum", lambda x: np.sum(x, axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if a.size == 0:
        raise DomainError("reduction over an empty tensor")
    n = a.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis, keepdims), 1.0 / n)


def l2_norm(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    return sqrt(tsum(mul(a, a), axis, keepdims))


def reduce(op: str, a, axis: int | None = None) -> Tensor:
    fns = {"sum": tsum, "mean": mean, "l2_norm": l2_norm}
    if op not in fns:
        raise UsageError(f"unknown reduction '{op}'")
    return fns[op](a, axis)


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    axis = axis % a.ndim

    def vjp(g, ps, out, needs):
        inner = tsum(mul(g, out), axis, keepdims=True)
        return (mul(out, sub(g, inner)),)

    return _apply("softmax", lambda x: _softmax(x, axis), (a,), vjp)


# ---------------------------------------------------------------------------
# differentiation

def _relevant(tape: Tape, upto: int, targets: set[int]) -> list[bool]:
    """``rel[i]`` is True when node ``i`` depends on one of ``targets``."""
    rel = [False] * (upto + 1)
    nodes = tape.nodes
    for i in range(upto + 1):
        if i in targets:
            rel[i] = True
            continue
        for p in nodes[i].parents:
            n = p.node
            if n is not None and rel[n]:
                rel[i] = True
                break
    return rel


def _backprop(
    root: Tensor, create_graph: bool, seed: Tensor | None = None, targets: set[int] | None = None
) -> dict[int, Tensor]:
    if root.node is None or root.tape is None:
        raise UsageError("backward: tensor is not on a tape (nothing requires grad)")
    tape = root.tape
    if create_graph and not tape.higher_order:
        raise UsageError("create_graph requested on a tape with higher_order disabled")
    if seed is None:
        if root.size != 1:
            raise UsageError(f"backward needs a scalar, got shape {root.shape}")
        seed = Tensor(np.ones_like(root.data))
    rel = _relevant(tape, root.node, targets) if targets is not None else None
    grads: dict[int, Tensor] = {root.node: seed}
    nodes = tape.nodes
    for i in range(root.node, -1, -1):
        g = grads.get(i)
        if g is None:
            continue
        node = nodes[i]
        if node.vjp is None:
            continue
        parents = node.parents
        if rel is None:
            needs = tuple(p.requires_grad for p in parents)
        else:
            needs = tuple(p.requires_grad and rel[p.node] for p in parents)
        if not any(needs):
            continue
        if create_graph:
            pgs = node.vjp(g, parents, node.out, needs)
        else:
            pgs = node.vjp(
                _wrap(g.data) if g.requires_grad else g,
                tuple(_wrap(p.data) for p in parents),
                _wrap(node.out.data),
                needs,
            )
        for p, pg, need in zip(parents, pgs, needs):
            if pg is None or not need:
                continue
            prev = grads.get(p.node)
            grads[p.node] = pg if prev is None else add(prev, pg)
    return grads


def backward(scalar: Tensor, create_graph: bool = False) -> dict[int, Tensor]:
    """Gradient of ``scalar`` with respect to every reachable requires-grad leaf.

    Returns a map from leaf node id to gradient.  With ``create_graph`` the
    gradients are recorded on the tape and may be differentiated again.
    """
    grads = _backprop(scalar, create_graph)
    nodes = scalar.tape.nodes
    return {i: g for i, g in grads.items() if nodes[i].op == "leaf"}


def grad(output: Tensor, inputs: Iterable[Tensor], create_graph: bool = False) -> list[Tensor]:
    """Gradients of scalar ``output`` w.r.t. ``inputs`` (zeros where unreachable)."""
    inputs = list(inputs)
    if output.node is None:
        return [zeros_like(t) for t in inputs]
    grads = _backprop(
        output, create_graph, targets={t.node for t in inputs if t.node is not None}
    )
    res = []
    for t in inputs:
        g = grads.get(t.node) if t.node is not None else None
        res.append(g if g is not None else zeros_like(t))
    return res


def grad_check(
    f: Callable[[Tensor], Tensor], x, h: float = 1e-6
) -> float:
    """Relative error between backprop and central differences.

    Measured as ``max|a - n| / max(max|a|, max|n|, 1e-12)`` over all
    coordinates, so coordinates whose true gradient is ~0 do not amplify
    finite-difference noise.
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    with Tape():
        xt = Tensor(x0.copy(), requires_grad=True)
        (analytic,) = grad(f(xt), [xt])
    a = analytic.data.reshape(-1)
    num = np.empty_like(a)
    flat = x0.reshape(-1)
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += h
        xm[i] -= h
        fp = f(Tensor(xp.reshape(x0.shape))).item()
        fm = f(Tensor(xm.reshape(x0.shape))).item()
        num[i] = (fp - fm) / (2.0 * h)
    return rel_error(a, num)


def rel_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-12)
    return float(np.max(np.abs(a - b))) / scale
