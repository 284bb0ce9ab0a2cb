"""
Reverse-mode automatic differentiation on a recorded tape
Nodes hold numpy values; elementwise ops store their local derivative, structural ops
(matmul, sum, slicing, concatenation) store a vector-Jacobian callable.
"""
import logging
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from errors import StructuralError

logger = logging.getLogger(__name__)

ELEMENTWISE_OPS = ('const', 'input', 'add', 'mul', 'neg', 'tanh', 'reciprocal', 'power', 'apply')
STRUCTURAL_OPS = ('matmul', 'sum', 'index', 'concat', 'transpose')


@dataclass
class Node:
    """One recorded value with its parents and local derivatives"""
    id: int
    op: str
    parents: Tuple[int, ...]
    value: np.ndarray
    partials: Tuple[Any, ...]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast adjoint back down to the parent's shape"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tape:
    """Append-only record of a single loss evaluation"""

    def __init__(self):
        self.nodes: List[Node] = []
        self.param_ids: List[int] = []

    def __len__(self):
        return len(self.nodes)

    def clear(self):
        """Drop every node; called between loss evaluations"""
        self.nodes = []
        self.param_ids = []

    def record(self, op: str, parents: Sequence[int], value, partials: Sequence[Any] = ()) -> int:
        """Append a node and return its id"""
        if op not in ELEMENTWISE_OPS and op not in STRUCTURAL_OPS:
            raise StructuralError(f"Unknown operation tag '{op}'")
        if len(parents) > 2 and op != 'concat':
            raise StructuralError(f"Operation '{op}' takes at most 2 parents, got {len(parents)}")
        if len(partials) != len(parents):
            raise StructuralError(
                f"Operation '{op}' has {len(parents)} parents but {len(partials)} partials"
            )
        for parent in parents:
            if not 0 <= parent < len(self.nodes):
                raise StructuralError(f"Parent id {parent} is not on the tape (size {len(self.nodes)})")

        node = Node(
            id=len(self.nodes),
            op=op,
            parents=tuple(parents),
            value=np.asarray(value, dtype=np.float64),
            partials=tuple(partials),
        )
        self.nodes.append(node)
        return node.id

    def const(self, value) -> 'Var':
        return Var(self, self.record('const', [], value))

    def input(self, value, trainable: bool = False) -> 'Var':
        """Leaf node; trainable leaves are remembered in param_ids"""
        node_id = self.record('input', [], np.array(value, dtype=np.float64, copy=True))
        if trainable:
            self.param_ids.append(node_id)
        return Var(self, node_id)

    def backward(self, output_id: int) -> List[np.ndarray]:
        """Adjoint of the output with respect to every node, by reverse sweep"""
        if not 0 <= output_id < len(self.nodes):
            raise StructuralError(f"Output id {output_id} is not on the tape")

        grads: List[Optional[np.ndarray]] = [None] * len(self.nodes)
        grads[output_id] = np.ones_like(self.nodes[output_id].value)

        for node_id in range(output_id, -1, -1):
            g = grads[node_id]
            if g is None:
                continue
            node = self.nodes[node_id]
            for parent, partial in zip(node.parents, node.partials):
                if callable(partial):
                    contribution = partial(g)
                else:
                    contribution = _unbroadcast(g * partial, self.nodes[parent].value.shape)
                if grads[parent] is None:
                    grads[parent] = contribution
                else:
                    grads[parent] = grads[parent] + contribution

        return [
            np.zeros_like(node.value) if grad is None else np.asarray(grad, dtype=np.float64)
            for node, grad in zip(self.nodes, grads)
        ]

    def param_gradients(self, output: 'Var') -> List[np.ndarray]:
        """Gradients of a scalar output for the trainable leaves, in registration order"""
        grads = self.backward(output.id)
        return [grads[node_id] for node_id in self.param_ids]


class Var:
    """Handle to a tape node with numpy-like arithmetic"""

    __array_ufunc__ = None

    def __init__(self, tape: Tape, node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.id].value

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(id={self.id}, shape={self.shape})"

    def _lift(self, other) -> 'Var':
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise StructuralError("Cannot combine values recorded on different tapes")
            return other
        return self.tape.const(other)

    def __add__(self, other):
        other = self._lift(other)
        value = self.value + other.value
        return Var(self.tape, self.tape.record('add', [self.id, other.id], value, [1.0, 1.0]))

    __radd__ = __add__

    def __neg__(self):
        return Var(self.tape, self.tape.record('neg', [self.id], -self.value, [-1.0]))

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        other = self._lift(other)
        value = self.value * other.value
        return Var(self.tape, self.tape.record('mul', [self.id, other.id], value, [other.value, self.value]))

    __rmul__ = __mul__

    def reciprocal(self):
        x = self.value
        return Var(self.tape, self.tape.record('reciprocal', [self.id], 1.0 / x, [-1.0 / (x * x)]))

    def __truediv__(self, other):
        return self * self._lift(other).reciprocal()

    def __rtruediv__(self, other):
        return self._lift(other) * self.reciprocal()

    def __pow__(self, exponent: float):
        if isinstance(exponent, Var):
            raise StructuralError("Only constant exponents are supported")
        x = self.value
        value = x ** exponent
        partial = exponent * x ** (exponent - 1)
        return Var(self.tape, self.tape.record('power', [self.id], value, [partial]))

    def tanh(self):
        t = np.tanh(self.value)
        # derivative from the stored activation
        return Var(self.tape, self.tape.record('tanh', [self.id], t, [1.0 - t * t]))

    def apply(self, fn: Callable, dfn: Callable):
        """Elementwise unary map with a known derivative"""
        x = self.value
        return Var(self.tape, self.tape.record('apply', [self.id], fn(x), [dfn(x)]))

    def __matmul__(self, other):
        other = self._lift(other)
        a, b = self.value, other.value
        if a.ndim != 2 or b.ndim != 2:
            raise StructuralError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
        if a.shape[1] != b.shape[0]:
            raise StructuralError(f"matmul shapes do not chain: {a.shape} @ {b.shape}")
        return Var(self.tape, self.tape.record(
            'matmul', [self.id, other.id], a @ b,
            [lambda g: g @ b.T, lambda g: a.T @ g],
        ))

    def __rmatmul__(self, other):
        return self._lift(other) @ self

    def sum(self, axis: Optional[int] = None):
        shape = self.shape
        value = self.value.sum(axis=axis)

        def vjp(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return np.broadcast_to(g, shape)

        return Var(self.tape, self.tape.record('sum', [self.id], value, [vjp]))

    @property
    def T(self):
        return Var(self.tape, self.tape.record('transpose', [self.id], self.value.T, [lambda g: g.T]))

    def __getitem__(self, index):
        shape = self.shape

        def vjp(g):
            full = np.zeros(shape)
            full[index] += g
            return full

        return Var(self.tape, self.tape.record('index', [self.id], self.value[index], [vjp]))


def concat(parts: Sequence[Any], tape: Tape, axis: int = 0) -> Var:
    """Concatenate tape values (or constants) along an axis"""
    handles = [part if isinstance(part, Var) else tape.const(part) for part in parts]
    values = [handle.value for handle in handles]
    bounds = np.cumsum([0] + [value.shape[axis] for value in values])

    def slicer(start, stop):
        def vjp(g):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            return g[tuple(index)]
        return vjp

    partials = [slicer(bounds[i], bounds[i + 1]) for i in range(len(handles))]
    node_id = tape.record('concat', [h.id for h in handles], np.concatenate(values, axis=axis), partials)
    return Var(tape, node_id)


def value_of(x) -> np.ndarray:
    """Plain array of a Var or anything array-like"""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)
