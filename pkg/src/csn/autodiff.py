"""Reverse-mode differentiation over the tensor primitives.

A Tape records every operation in execution order, so inputs always precede
the nodes that consume them. backward() walks the list once, in reverse;
each node's closure holds references to its inputs and whatever forward
values its adjoint needs. A non-recording tape runs the same ops without
building a graph, which is how inference avoids keeping intermediates alive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops


class Param:
    """One learnable array plus its (lazily allocated) gradient slot."""

    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = value
        self.grad = None


class ParamStore:
    """Named, ordered collection of parameters; the checkpoint unit."""

    def __init__(self):
        self._entries = {}

    def add(self, name: str, value: np.ndarray) -> Param:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name: {name}")
        p = Param(value)
        self._entries[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self):
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def n_scalars(self) -> int:
        return sum(p.value.size for p in self._entries.values())

    def zero_grad(self):
        for p in self._entries.values():
            if p.grad is None:
                p.grad = np.zeros_like(p.value)
            else:
                p.grad[...] = 0

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore()
        for name, p in self._entries.items():
            out.add(name, p.value.astype(dtype))
        return out


class Node:
    """A value on a tape. Parameters are leaves marked with their Param."""

    __slots__ = ("value", "grad", "tape", "param", "_backward")

    def __init__(self, value, tape, param=None, backward=None):
        self.value = value
        self.grad = None
        self.tape = tape
        self.param = param
        self._backward = backward


class Tape:
    def __init__(self, recording: bool = True):
        self.recording = recording
        self.nodes: list[Node] = []

    def leaf(self, value, param: Param | None = None) -> Node:
        node = Node(np.asarray(value), self, param=param)
        if self.recording:
            self.nodes.append(node)
        return node

    def _record(self, value, backward) -> Node:
        node = Node(value, self, backward=backward)
        self.nodes.append(node)
        return node

    def backward(self, loss: Node):
        """Propagate d(loss)/d(node) to every node, accumulating into Param.grad.

        Gradients add across fan-out; leaves without a Param keep their grad
        on the node only.
        """
        if not self.recording:
            raise ValueError("cannot run backward on a non-recording tape")
        if loss.tape is not self:
            raise ValueError("loss node does not belong to this tape")
        if loss.value.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")
        for node in self.nodes:
            node.grad = None
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            if node._backward is not None:
                node._backward(node.grad)
            if node.param is not None:
                if node.param.grad is None:
                    node.param.grad = np.zeros_like(node.param.value)
                node.param.grad += node.grad


def _add_grad(node: Node, g, fresh: bool = False):
    # fresh=True means g is a newly allocated array this op owns.
    if node.grad is None:
        node.grad = g if fresh else np.array(g)
    else:
        node.grad += g


def conv2d(x: Node, w: Node, b: Node) -> Node:
    value = ops.conv2d_raw(x.value, w.value, b.value)
    tape = x.tape
    if not tape.recording:
        return Node(value, tape)
    xv, wv = x.value, w.value
    k = wv.shape[2]

    def bwd(g):
        _add_grad(b, g.sum(axis=(0, 2, 3)), fresh=True)
        _add_grad(w, ops.conv2d_weight_grad(xv, g, k), fresh=True)
        _add_grad(x, ops.conv2d_input_grad(g, wv), fresh=True)

    return tape._record(value, bwd)


def relu(x: Node) -> Node:
    value = ops.relu(x.value)
    tape = x.tape
    if not tape.recording:
        return Node(value, tape)

    def bwd(g):
        # derivative at the kink (input exactly 0) is defined as 0
        _add_grad(x, g * (value > 0), fresh=True)

    return tape._record(value, bwd)


def add(a: Node, b: Node) -> Node:
    value = ops.add(a.value, b.value)
    tape = a.tape
    if not tape.recording:
        return Node(value, tape)

    def bwd(g):
        _add_grad(a, g)
        _add_grad(b, g)

    return tape._record(value, bwd)


def scale(x: Node, alpha: float) -> Node:
    value = ops.scale(x.value, alpha)
    tape = x.tape
    if not tape.recording:
        return Node(value, tape)

    def bwd(g):
        _add_grad(x, g * alpha, fresh=True)

    return tape._record(value, bwd)


def concat_channels(parts) -> Node:
    parts = list(parts)
    value = ops.concat_channels([p.value for p in parts])
    tape = parts[0].tape
    if not tape.recording:
        return Node(value, tape)
    widths = [p.value.shape[1] for p in parts]

    def bwd(g):
        lo = 0
        for p, wd in zip(parts, widths):
            _add_grad(p, g[:, lo:lo + wd])
            lo += wd

    return tape._record(value, bwd)


def split_channels(x: Node, sizes) -> list:
    values = ops.split_channels(x.value, sizes)
    tape = x.tape
    if not tape.recording:
        return [Node(v, tape) for v in values]
    out, lo = [], 0
    for v in values:
        hi = lo + v.shape[1]

        def bwd(g, lo=lo, hi=hi):
            if x.grad is None:
                x.grad = np.zeros_like(x.value)
            x.grad[:, lo:hi] += g

        out.append(tape._record(v, bwd))
        lo = hi
    return out


def pixel_shuffle(x: Node, r: int) -> Node:
    value = ops.pixel_shuffle(x.value, r)
    tape = x.tape
    if not tape.recording:
        return Node(value, tape)

    def bwd(g):
        _add_grad(x, ops.pixel_unshuffle(g, r), fresh=True)

    return tape._record(value, bwd)


def sum_all(x: Node) -> Node:
    value = np.asarray(x.value.sum())
    tape = x.tape
    if not tape.recording:
        return Node(value, tape)
    xv = x.value

    def bwd(g):
        _add_grad(x, np.full_like(xv, float(g)), fresh=True)

    return tape._record(value, bwd)


def l1_loss(pred: Node, target) -> Node:
    """Mean absolute error; the derivative at zero residual is 0."""
    tv = target.value if isinstance(target, Node) else np.asarray(target)
    if pred.value.shape != tv.shape:
        raise ValueError(f"l1_loss shape mismatch: {pred.value.shape} vs {tv.shape}")
    diff = pred.value - tv
    value = np.asarray(np.mean(np.abs(diff)))
    tape = pred.tape
    if not tape.recording:
        return Node(value, tape)

    def bwd(g):
        gg = np.sign(diff) * (float(g) / diff.size)
        _add_grad(pred, gg, fresh=True)
        if isinstance(target, Node):
            _add_grad(target, -gg)

    return tape._record(value, bwd)


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    worst_index: int
    checked: int
    skipped: int

    def __str__(self):
        return (f"max relative error {self.max_rel_error:.3e} "
                f"(param '{self.worst_param}' coord {self.worst_index}; "
                f"{self.checked} coords checked, {self.skipped} kinks skipped)")


def grad_check(f, store: ParamStore, eps: float = 1e-4,
               max_coords_per_param: int = 100, rng=None) -> GradCheckResult:
    """Compare analytic gradients of f against central finite differences.

    f maps the store to a scalar Node on a fresh recording tape. Relative
    error per coordinate is |a - n| / max(1e-8, |a| + |n|). Coordinates whose
    one-sided differences disagree sit on a kink (relu / l1 corner inside the
    +-eps interval) and are excluded. Use double precision: float32 cannot
    resolve 1e-5 relative tolerances.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if rng is None:
        rng = np.random.default_rng(0)

    store.zero_grad()
    loss = f(store)
    loss.tape.backward(loss)
    analytic = {name: p.grad.copy() for name, p in store.items()}
    f0 = float(loss.value)

    worst = GradCheckResult(0.0, "", -1, 0, 0)
    for name, p in store.items():
        flat = p.value.reshape(-1)
        size = flat.size
        if size <= max_coords_per_param:
            idxs = range(size)
        else:
            idxs = np.sort(rng.choice(size, size=max_coords_per_param, replace=False))
        ga = analytic[name].reshape(-1)
        for i in idxs:
            old = flat[i]
            flat[i] = old + eps
            fp = float(f(store).value)
            flat[i] = old - eps
            fm = float(f(store).value)
            flat[i] = old
            d_plus = (fp - f0) / eps
            d_minus = (f0 - fm) / eps
            if abs(d_plus - d_minus) > 0.5 * max(abs(d_plus), abs(d_minus), 1e-8):
                worst.skipped += 1
                continue
            numeric = (fp - fm) / (2.0 * eps)
            a = float(ga[i])
            rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst.checked += 1
            if rel > worst.max_rel_error:
                worst.max_rel_error = rel
                worst.worst_param = name
                worst.worst_index = int(i)
    return worst
