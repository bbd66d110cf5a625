"""Dense 2-D float64 tensors with reverse-mode automatic differentiation.

Everything is a row-major (batch x features) matrix; scalars are 1x1.
Values are immutable once a Node is created, gradients accumulate into
``Node.grad`` until explicitly zeroed. The op set is deliberately small:
just enough to train a layered encoder and a pair of small GANs, with
every backward rule verifiable against central finite differences via
:func:`grad_check`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .errors import DeterminismError, DimensionError, DomainError, NumericError

# Single shared clamp constant: callers clamp probabilities to >= EPS before log.
EPS = 1e-12


def matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce ``data`` to a 2-D float64 C-order array, optionally checking shape."""
    arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    if rows is not None and arr.shape[0] != rows:
        raise DimensionError(f"expected {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise DimensionError(f"expected {cols} cols, got {arr.shape[1]}")
    return arr


def _check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{what} contains NaN/Inf")
    return arr


class Node:
    """One vertex of a computation graph.

    ``value`` is a 2-D float64 matrix, ``grad`` the same-shape accumulator
    (zero-initialized). ``parents`` reference the producing operation's
    inputs; leaves have none.
    """

    __slots__ = ("value", "grad", "parents", "requires_grad", "name", "_backward_fn")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False,
                 name: str | None = None):
        # copy so freezing never aliases a caller-owned array
        self.value = _check_finite(matrix(value), name or "node value").copy()
        self.value.flags.writeable = False
        self.grad = np.zeros_like(self.value)
        self.parents: tuple[Node, ...] = tuple(parents)
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.name = name
        self._backward_fn: Callable[[np.ndarray], None] | None = backward_fn

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def is_leaf(self) -> bool:
        return not self.parents

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise DimensionError(f"item() needs a 1x1 node, got {self.value.shape}")
        return float(self.value[0, 0])

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Node(shape={self.value.shape}{tag}, requires_grad={self.requires_grad})"


def constant(data, name: str | None = None) -> Node:
    """Leaf with no gradient; used for inputs, targets, masks."""
    return Node(data, requires_grad=False, name=name)


def parameter(data, name: str | None = None) -> Node:
    """Trainable leaf; gradients accumulate here."""
    return Node(data, requires_grad=True, name=name)


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------

def matmul(a: Node, b: Node) -> Node:
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dims differ, {a.shape} x {b.shape}")
    out = Node(a.value @ b.value, parents=(a, b))

    def backward(g: np.ndarray) -> None:
        a.grad += g @ b.value.T
        b.grad += a.value.T @ g

    out._backward_fn = backward
    return out


def add(a: Node, b: Node) -> Node:
    """Elementwise add; ``b`` may be a 1xM bias broadcast over a's rows."""
    if a.shape == b.shape:
        out = Node(a.value + b.value, parents=(a, b))

        def backward(g: np.ndarray) -> None:
            a.grad += g
            b.grad += g

    elif b.shape == (1, a.shape[1]):
        out = Node(a.value + b.value, parents=(a, b))

        def backward(g: np.ndarray) -> None:
            a.grad += g
            b.grad += g.sum(axis=0, keepdims=True)

    else:
        raise DimensionError(f"add: shapes not conformable, {a.shape} + {b.shape}")
    out._backward_fn = backward
    return out


def mul(a: Node, b: Node) -> Node:
    """Elementwise (Hadamard) product of same-shape matrices."""
    if a.shape != b.shape:
        raise DimensionError(f"elementwise-multiply: shapes differ, {a.shape} vs {b.shape}")
    out = Node(a.value * b.value, parents=(a, b))

    def backward(g: np.ndarray) -> None:
        a.grad += g * b.value
        b.grad += g * a.value

    out._backward_fn = backward
    return out


def scale(a: Node, c: float) -> Node:
    """Multiply every entry by the python scalar ``c`` (not differentiated)."""
    c = float(c)
    out = Node(a.value * c, parents=(a,))

    def backward(g: np.ndarray) -> None:
        a.grad += g * c

    out._backward_fn = backward
    return out


def tanh(a: Node) -> Node:
    t = np.tanh(a.value)
    out = Node(t, parents=(a,))

    def backward(g: np.ndarray) -> None:
        a.grad += g * (1.0 - t * t)

    out._backward_fn = backward
    return out


def relu(a: Node) -> Node:
    out = Node(np.maximum(a.value, 0.0), parents=(a,))

    def backward(g: np.ndarray) -> None:
        a.grad += g * (a.value > 0.0)

    out._backward_fn = backward
    return out


def log(a: Node) -> Node:
    """Natural log; rejects non-positive entries (callers clamp to >= EPS first)."""
    if np.any(a.value <= 0.0):
        raise DomainError("log of non-positive entry; clamp inputs to >= EPS first")
    out = Node(np.log(a.value), parents=(a,))

    def backward(g: np.ndarray) -> None:
        a.grad += g / a.value

    out._backward_fn = backward
    return out


def row_mean(a: Node) -> Node:
    """Mean over rows: NxM -> 1xM."""
    n = a.shape[0]
    out = Node(a.value.mean(axis=0, keepdims=True), parents=(a,))

    def backward(g: np.ndarray) -> None:
        a.grad += np.broadcast_to(g / n, a.shape)

    out._backward_fn = backward
    return out


def sum_all(a: Node) -> Node:
    """Sum of all entries: NxM -> 1x1."""
    out = Node([[a.value.sum()]], parents=(a,))

    def backward(g: np.ndarray) -> None:
        a.grad += g[0, 0]

    out._backward_fn = backward
    return out


def sigmoid(a: Node) -> Node:
    # computed via tanh to stay overflow-safe on both tails
    s = 0.5 * (np.tanh(0.5 * a.value) + 1.0)
    out = Node(s, parents=(a,))

    def backward(g: np.ndarray) -> None:
        a.grad += g * s * (1.0 - s)

    out._backward_fn = backward
    return out


def clamp_min(a: Node, lo: float = EPS) -> Node:
    """max(a, lo); gradient passes only where the input was above ``lo``."""
    keep = a.value > lo
    out = Node(np.where(keep, a.value, lo), parents=(a,))

    def backward(g: np.ndarray) -> None:
        a.grad += g * keep

    out._backward_fn = backward
    return out


def softmax_stable(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a plain matrix with per-row max subtraction."""
    logits = matrix(logits)
    if logits.size == 0:
        raise DimensionError("softmax of an empty matrix")
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax(a: Node) -> Node:
    """Differentiable row-wise softmax."""
    p = softmax_stable(a.value)
    out = Node(p, parents=(a,))

    def backward(g: np.ndarray) -> None:
        # dL/dz = p * (g - sum_j g_j p_j) per row
        dot = (g * p).sum(axis=1, keepdims=True)
        a.grad += p * (g - dot)

    out._backward_fn = backward
    return out


_PRIMITIVES: dict[str, Callable[..., Node]] = {
    "matmul": matmul,
    "add": add,
    "elementwise-multiply": mul,
    "scalar-scale": scale,
    "tanh": tanh,
    "relu": relu,
    "row-mean": row_mean,
    "log": log,
}


def forward_primitive(op_kind: str, *inputs) -> Node:
    """Dispatch one of the core primitive ops by name."""
    if op_kind not in _PRIMITIVES:
        raise DomainError(f"unknown op_kind {op_kind!r}; expected one of {sorted(_PRIMITIVES)}")
    return _PRIMITIVES[op_kind](*inputs)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
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


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    Interior nodes are re-zeroed per call so the flow is well defined;
    leaf gradients accumulate across calls until the caller zeroes them.
    """
    if loss.shape != (1, 1):
        raise DimensionError(f"backward needs a 1x1 scalar loss, got {loss.shape}")
    order = _topo_order(loss)
    for node in order:
        if not node.is_leaf():
            node.grad = np.zeros_like(node.value)
    loss.grad = loss.grad + 1.0 if loss.is_leaf() else np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward_fn is not None and node.requires_grad:
            node._backward_fn(node.grad)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

class ParameterSet:
    """Named, insertion-ordered collection of trainable Nodes."""

    def __init__(self):
        self._entries: dict[str, Node] = {}

    def add(self, name: str, value) -> Node:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        node = parameter(value, name=name)
        self._entries[name] = node
        return node

    def adopt(self, name: str, node: Node) -> Node:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        node.name = name
        self._entries[name] = node
        return node

    def __getitem__(self, name: str) -> Node:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[Node]:
        return iter(self._entries.values())

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self) -> Iterator[tuple[str, Node]]:
        return iter(self._entries.items())

    def zero_grad(self) -> None:
        for node in self:
            node.grad = np.zeros_like(node.value)

    def set_value(self, name: str, value: np.ndarray) -> None:
        """Replace a parameter's value (same shape); used by optimizer steps."""
        node = self._entries[name]
        value = _check_finite(matrix(value, *node.shape), f"parameter {name}").copy()
        value.flags.writeable = False
        node.value = value

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: node.value.copy() for name, node in self.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name in self.names():
            self.set_value(name, values[name])

    def sgd_step(self, lr: float) -> None:
        """Plain gradient-descent update on every entry."""
        for name, node in self.items():
            self.set_value(name, node.value - lr * node.grad)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float
    worst_index: tuple[int, int]


@dataclass
class GradCheckReport:
    passed: bool
    tol: float
    epsilon: float
    max_rel_error: float
    worst_parameter: str
    entries: list[GradCheckEntry] = field(default_factory=list)

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"grad_check {status}: max rel err {self.max_rel_error:.3e} "
                f"(tol {self.tol:.1e}) at parameter {self.worst_parameter!r}")


def grad_check(parameters: ParameterSet, loss_fn: Callable[[], Node],
               epsilon: float = 1e-5, tol: float = 1e-4,
               max_entries_per_param: int | None = None,
               rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_fn`` must rebuild the graph from the current parameter values on
    every call and be deterministic; determinism is verified by evaluating
    twice before any perturbation. Entries may be subsampled per parameter
    via ``max_entries_per_param`` for larger nets.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise DomainError(f"epsilon {epsilon} outside [1e-6, 1e-3]")

    v1 = loss_fn().item()
    v2 = loss_fn().item()
    if v1 != v2:
        raise DeterminismError(f"loss_fn not deterministic: {v1!r} != {v2!r}")

    parameters.zero_grad()
    backward(loss_fn())
    analytic = {name: node.grad.copy() for name, node in parameters.items()}

    rng = rng or np.random.default_rng(0)
    entries: list[GradCheckEntry] = []
    overall_max, overall_worst, worst_name = 0.0, (0, 0), ""

    for name, node in parameters.items():
        rows, cols = node.shape
        coords = [(r, c) for r in range(rows) for c in range(cols)]
        if max_entries_per_param is not None and len(coords) > max_entries_per_param:
            pick = rng.choice(len(coords), size=max_entries_per_param, replace=False)
            coords = [coords[int(i)] for i in pick]
        base = node.value
        max_rel, worst = 0.0, (0, 0)
        for (r, c) in coords:
            bumped = base.copy()
            bumped[r, c] = base[r, c] + epsilon
            parameters.set_value(name, bumped)
            f_plus = loss_fn().item()
            bumped[r, c] = base[r, c] - epsilon
            parameters.set_value(name, bumped)
            f_minus = loss_fn().item()
            parameters.set_value(name, base)
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            a = analytic[name][r, c]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            if rel > max_rel:
                max_rel, worst = rel, (r, c)
        entries.append(GradCheckEntry(name, max_rel, worst))
        if max_rel > overall_max:
            overall_max, overall_worst, worst_name = max_rel, worst, name

    return GradCheckReport(passed=overall_max < tol, tol=tol, epsilon=epsilon,
                           max_rel_error=overall_max, worst_parameter=worst_name,
                           entries=entries)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform init in +-sqrt(6/(fan_in+fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))
