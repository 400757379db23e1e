"""Reverse-mode differentiation over dense float64 arrays.

A ``Node`` wraps a value plus closures mapping an upstream gradient to each
parent's gradient. Graphs are built eagerly and torn down after ``backward``;
constant subgraphs are collapsed (a node with no grad-requiring parents keeps
no parents at all), so data-only computations cost nothing at backward time.

Primitive ops broadcast over leading batch dimensions wherever numpy does.
The max reduction routes its sub-gradient to the first (lowest-index) argmax
element per reduction group.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument, NumericFailure


class Node:
    __slots__ = ("value", "parents", "vjps", "trainable", "name")

    def __init__(self, value, parents=(), vjps=(), trainable=False, name=""):
        self.value = value
        self.parents = parents
        self.vjps = vjps
        self.trainable = trainable
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = self.name or "node"
        return f"<{tag} {getattr(self.value, 'shape', ())}>"


def constant(x, name="") -> Node:
    return Node(np.asarray(x, dtype=np.float64), name=name)


def param(x, name="") -> Node:
    return Node(np.asarray(x, dtype=np.float64), trainable=True, name=name)


def _needs_grad(node: Node) -> bool:
    return node.trainable or bool(node.parents)


def _op(value, pairs, name=""):
    """Build a node keeping only the (parent, vjp) pairs that require grad."""
    live = tuple(p for p in pairs if _needs_grad(p[0]))
    if not live:
        return Node(value, name=name)
    parents, vjps = zip(*live)
    return Node(value, parents, vjps, name=name)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad over the axes numpy broadcast to produce it."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a: Node, b: Node) -> Node:
    return _op(a.value + b.value,
               ((a, lambda g: _unbroadcast(g, a.value.shape)),
                (b, lambda g: _unbroadcast(g, b.value.shape))), "add")


def sub(a: Node, b: Node) -> Node:
    return _op(a.value - b.value,
               ((a, lambda g: _unbroadcast(g, a.value.shape)),
                (b, lambda g: _unbroadcast(-g, b.value.shape))), "sub")


def mul(a: Node, b: Node) -> Node:
    return _op(a.value * b.value,
               ((a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
                (b, lambda g: _unbroadcast(g * a.value, b.value.shape))), "mul")


def div(a: Node, b: Node) -> Node:
    inv = 1.0 / b.value
    return _op(a.value * inv,
               ((a, lambda g: _unbroadcast(g * inv, a.value.shape)),
                (b, lambda g: _unbroadcast(-g * a.value * inv * inv, b.value.shape))),
               "div")


def neg(a: Node) -> Node:
    return _op(-a.value, ((a, lambda g: -g),), "neg")


def scale(a: Node, c: float) -> Node:
    return _op(a.value * c, ((a, lambda g: g * c),), "scale")


def shift(a: Node, c) -> Node:
    """Add a constant array or scalar."""
    c = np.asarray(c, dtype=np.float64)
    return _op(a.value + c, ((a, lambda g: _unbroadcast(g, a.value.shape)),), "shift")


def _swapT(x):
    return np.swapaxes(x, -1, -2)


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise InvalidArgument("matmul operands must have rank >= 2")
    value = a.value @ b.value

    def ga(g):
        return _unbroadcast(g @ _swapT(b.value), a.value.shape)

    def gb(g):
        return _unbroadcast(_swapT(a.value) @ g, b.value.shape)

    return _op(value, ((a, ga), (b, gb)), "matmul")


def relu(a: Node) -> Node:
    mask = a.value > 0
    return _op(np.where(mask, a.value, 0.0), ((a, lambda g: g * mask),), "relu")


def absolute(a: Node) -> Node:
    s = np.sign(a.value)  # sign(0) = 0, so the kink passes zero gradient
    return _op(np.abs(a.value), ((a, lambda g: g * s),), "abs")


def log(a: Node) -> Node:
    return _op(np.log(a.value), ((a, lambda g: g / a.value),), "log")


def exp(a: Node) -> Node:
    v = np.exp(a.value)
    return _op(v, ((a, lambda g: g * v),), "exp")


def sqrt(a: Node) -> Node:
    v = np.sqrt(a.value)
    return _op(v, ((a, lambda g: g * (0.5 / v)),), "sqrt")


def reduce_sum(a: Node, axis=None, keepdims=False) -> Node:
    value = a.value.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is None:
            return np.broadcast_to(g, a.value.shape).copy() if np.ndim(g) == 0 \
                else np.full(a.value.shape, g)
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.value.shape)

    return _op(value, ((a, back),), "sum")


def max_reduce(a: Node, axis: int, keepdims=True) -> Node:
    """Max over one axis; backward sends the whole upstream gradient to the
    first argmax element of each group."""
    idx = np.argmax(a.value, axis=axis)
    idx_e = np.expand_dims(idx, axis)
    value = np.take_along_axis(a.value, idx_e, axis=axis)
    if not keepdims:
        value = np.squeeze(value, axis=axis)

    def back(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        out = np.zeros_like(a.value)
        np.put_along_axis(out, idx_e, gg, axis=axis)
        return out

    return _op(value, ((a, back),), "max")


def concat(nodes, axis=-1) -> Node:
    values = [n.value for n in nodes]
    value = np.concatenate(values, axis=axis)
    sizes = [v.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)
    ax = axis % value.ndim

    pairs = []
    for i, n in enumerate(nodes):
        lo, hi = offsets[i], offsets[i + 1]

        def back(g, lo=lo, hi=hi):
            sl = [slice(None)] * value.ndim
            sl[ax] = slice(lo, hi)
            return g[tuple(sl)]

        pairs.append((n, back))
    return _op(value, tuple(pairs), "concat")


def gather(a: Node, idx) -> Node:
    """Index rows (axis 0) with an integer array of any shape."""
    idx = np.asarray(idx, dtype=np.int64)
    value = a.value[idx]

    def back(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return out

    return _op(value, ((a, back),), "gather")


def scatter_rows(src: Node, idx, n_rows: int) -> Node:
    """Sum source entries into rows of a fresh (n_rows, ...) array.

    idx has the shape of the leading axes of src; duplicate indices add.
    """
    idx = np.asarray(idx, dtype=np.int64)
    tail = src.value.shape[idx.ndim:]
    out = np.zeros((n_rows,) + tail)
    np.add.at(out, idx, src.value)
    return _op(out, ((src, lambda g: g[idx]),), "scatter")


def mean_of(nodes) -> Node:
    """Arithmetic mean over a list of same-shape nodes."""
    if not nodes:
        raise InvalidArgument("mean_of needs at least one node")
    value = nodes[0].value.copy()
    for n in nodes[1:]:
        value += n.value
    value /= len(nodes)
    c = 1.0 / len(nodes)
    return _op(value, tuple((n, lambda g, c=c: g * c) for n in nodes), "mean")


def reshape(a: Node, new_shape) -> Node:
    old = a.value.shape
    return _op(a.value.reshape(new_shape),
               ((a, lambda g: g.reshape(old)),), "reshape")


def transpose_last(a: Node) -> Node:
    return _op(_swapT(a.value), ((a, lambda g: _swapT(g)),), "transposeT")


def slice_node(a: Node, key) -> Node:
    value = a.value[key]

    def back(g):
        out = np.zeros_like(a.value)
        out[key] = g
        return out

    return _op(value, ((a, back),), "slice")


def rownorm(a: Node) -> Node:
    """Normalize each row (last axis) to sum to 1."""
    s = a.value.sum(axis=-1, keepdims=True)
    value = a.value / s

    def back(g):
        return (g - (g * value).sum(axis=-1, keepdims=True)) / s

    return _op(value, ((a, back),), "rownorm")


def sum_abs(a: Node) -> Node:
    return reduce_sum(absolute(a))


def sum_squares(a: Node) -> Node:
    return reduce_sum(mul(a, a))


def register_custom_gradient(forward, backward_rule):
    """Wrap an opaque array function with a hand-written gradient.

    ``forward`` maps input arrays to one array or a tuple of arrays.
    ``backward_rule`` maps (input values, output upstream gradients) to a
    tuple of input gradients, one per input (None for no gradient). Shapes
    are validated against the inputs on the first backward call.
    """

    def apply(*inputs: Node):
        values = [x.value for x in inputs]
        out = forward(*values)
        multi = isinstance(out, tuple)
        outs = out if multi else (out,)
        outs = tuple(np.asarray(o, dtype=np.float64) for o in outs)

        holder = Node(outs, name="custom-joint")
        live = [x for x in inputs if _needs_grad(x)]
        if live:
            def joint_back(slot_grads, values=values):
                gs = backward_rule(values, slot_grads)
                if not isinstance(gs, tuple):
                    gs = (gs,)
                if len(gs) != len(inputs):
                    raise InvalidArgument(
                        "custom gradient returned wrong number of input grads")
                for gi, xi in zip(gs, inputs):
                    if gi is not None and np.shape(gi) != xi.value.shape:
                        raise InvalidArgument(
                            f"custom gradient shape {np.shape(gi)} does not "
                            f"match input shape {xi.value.shape}")
                return gs

            holder.parents = tuple(inputs)
            holder.vjps = (joint_back,)  # consumed specially in backward()

        children = []
        for i, o in enumerate(outs):
            def back(g, i=i, shapes=tuple(o.shape for o in outs)):
                slots = [np.zeros(s) for s in shapes]
                slots[i] = g
                return tuple(slots)

            children.append(_op(o, ((holder, back),), name=f"custom-out{i}"))
        return tuple(children) if multi else children[0]

    return apply


def _toposort(root: Node):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Node):
    """Accumulate d(loss)/d(node) for every trainable leaf reachable from loss.

    Returns a dict keyed by node identity; non-trainable leaves get nothing.
    """
    if isinstance(loss.value, tuple) or np.asarray(loss.value).size != 1:
        raise InvalidArgument("backward requires a scalar loss node")
    order = _toposort(loss)
    grads: dict[int, object] = {id(loss): np.ones_like(loss.value)}
    result: dict[Node, np.ndarray] = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.trainable:
            prev = result.get(node)
            result[node] = g if prev is None else prev + g
        if not node.parents:
            continue
        if isinstance(node.value, tuple):
            # custom multi-output joint node: g is a list of per-slot grads
            input_grads = node.vjps[0](tuple(g))
            for parent, pg in zip(node.parents, input_grads):
                if pg is None or not _needs_grad(parent):
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            pg = vjp(g)
            acc = grads.get(id(parent))
            if isinstance(parent.value, tuple):
                if acc is None:
                    acc = [np.zeros(o.shape) for o in parent.value]
                for slot, sg in zip(acc, pg):
                    slot += sg
                grads[id(parent)] = acc
            else:
                grads[id(parent)] = pg if acc is None else acc + pg
    return result


class ParamStore:
    """Named trainable arrays with shapes fixed at creation."""

    def __init__(self):
        self._params: dict[str, Node] = {}

    def add(self, name: str, value) -> Node:
        if name in self._params:
            raise InvalidArgument(f"duplicate parameter name {name!r}")
        node = param(value, name=name)
        self._params[name] = node
        return node

    def __getitem__(self, name: str) -> Node:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def set_value(self, name: str, value):
        node = self._params[name]
        value = np.asarray(value, dtype=np.float64)
        if value.shape != node.value.shape:
            raise InvalidArgument(
                f"parameter {name!r} has fixed shape {node.value.shape}, "
                f"got {value.shape}")
        node.value = value


def gradcheck(f, x: np.ndarray, eps: float = 1e-6) -> float:
    """Max relative error between analytic and central-FD gradients of a
    scalar node function evaluated at x."""
    x = np.asarray(x, dtype=np.float64)
    leaf = param(x.copy(), name="gradcheck-x")
    out = f(leaf)
    analytic = backward(out).get(leaf)
    if analytic is None:
        analytic = np.zeros_like(x)
    fd = np.zeros_like(x)
    flat = fd.reshape(-1)
    base = x.copy()
    for i in range(base.size):
        xp = base.reshape(-1).copy()
        xm = base.reshape(-1).copy()
        xp[i] += eps
        xm[i] -= eps
        fp = float(f(constant(xp.reshape(x.shape))).value)
        fm = float(f(constant(xm.reshape(x.shape))).value)
        flat[i] = (fp - fm) / (2.0 * eps)
    if not (np.all(np.isfinite(fd)) and np.all(np.isfinite(analytic))):
        raise NumericFailure("non-finite values in gradient check")
    return max_rel_error(analytic, fd)


def max_rel_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(1e-12, np.abs(a) + np.abs(b))
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / denom))
