"""Dense tensors recorded on a reverse-mode tape.

Operations only record themselves while a :class:`Tape` is active and at
least one input requires a gradient; outside a tape the engine is a thin
wrapper over numpy and allocates no graph.
"""
from __future__ import annotations

import numpy as np

_TAPES: list["Tape"] = []
_DEBUG = False


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


def set_debug(flag: bool) -> None:
    """Enable NaN/Inf checks on every recorded op output."""
    global _DEBUG
    _DEBUG = bool(flag)


class Tensor:
    """N-dimensional array with an optional slot on the active tape."""

    __slots__ = ("data", "requires_grad", "grad", "name", "parents", "vjp", "node_id")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self.parents = ()
        self.vjp = None
        self.node_id = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    # arithmetic sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def sum(self):
        from . import ops
        return ops.sum_all(self)

    def mean(self):
        from . import ops
        return ops.mean_all(self)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else np.float64))


class Tape:
    """Ordered record of primitive ops; creation order is a topological order.

    Use as a context manager::

        with Tape() as tape:
            loss = model_loss(params)
        grads = tape.backward(loss)
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def backward(self, loss, wrt=None):
        return backward(self, loss, wrt=wrt)


def active_tape():
    return _TAPES[-1] if _TAPES else None


def record(out_data, parents, vjp, name=None) -> Tensor:
    """Wrap an op result, recording it on the active tape when needed.

    ``vjp(g)`` must return one gradient (or None) per parent.
    """
    out = Tensor(out_data, name=name)
    if _DEBUG and not np.all(np.isfinite(out.data)):
        raise FloatingPointError(f"non-finite values produced by {name or 'op'}")
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.vjp = vjp
        out.node_id = len(tape.nodes)
        tape.nodes.append(out)
    return out


def backward(tape: Tape, loss: Tensor, wrt=None):
    """Reverse-accumulate d(loss)/d(leaf) over the tape.

    Returns a dict mapping every reached leaf tensor that requires a gradient
    to its gradient array, or, when ``wrt`` is given, a list of gradients in
    that order with zeros for tensors the loss does not depend on. Leaf
    ``.grad`` attributes are accumulated as a side effect.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.node_id is None or loss.node_id >= len(tape.nodes) or tape.nodes[loss.node_id] is not loss:
        raise ValueError("loss was not recorded on this tape")

    pending = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, tuple[Tensor, np.ndarray]] = {}
    for node in reversed(tape.nodes[: loss.node_id + 1]):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if parent.node_id is None:
                if key in leaves:
                    leaves[key] = (parent, leaves[key][1] + pg)
                else:
                    leaves[key] = (parent, pg)
            elif key in pending:
                pending[key] = pending[key] + pg
            else:
                pending[key] = pg

    for leaf, g in leaves.values():
        leaf.grad = g if leaf.grad is None else leaf.grad + g
    if wrt is None:
        return {leaf: g for leaf, g in leaves.values()}
    out = []
    for t in wrt:
        hit = leaves.get(id(t))
        out.append(hit[1] if hit is not None else np.zeros_like(t.data))
    return out
