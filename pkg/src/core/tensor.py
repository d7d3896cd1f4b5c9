"""
Dense tensor with reverse-mode automatic differentiation
Tensors are numpy-backed; every primitive records a GradNode and the GradGraph
is recovered by a topological walk from the loss
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union
import numpy as np

from ..utils.errors import ContractError, DimensionError

ArrayLike = Union[np.ndarray, Sequence, float, int]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

PRECISIONS = {"float32": np.float32, "float64": np.float64}


def resolve_dtype(precision: Union[str, np.dtype, type, None]) -> np.dtype:
    """Map a precision tag or numpy dtype to a supported float dtype"""
    if precision is None:
        return np.dtype(np.float64)
    if isinstance(precision, str):
        if precision not in PRECISIONS:
            raise ContractError(f"unsupported precision {precision!r}")
        return np.dtype(PRECISIONS[precision])
    dtype = np.dtype(precision)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ContractError(f"unsupported dtype {dtype}")
    return dtype


class GradNode:
    """One primitive application: inputs, output and the backward rule"""

    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op: str, inputs: Tuple["Tensor", ...], backward: BackwardFn):
        self.op = op
        self.inputs = inputs
        self.output: Optional["Tensor"] = None
        self.backward = backward

    def __repr__(self):
        shapes = ", ".join(str(t.shape) for t in self.inputs)
        return f"GradNode({self.op}: {shapes} -> {self.output.shape if self.output is not None else None})"


class Tensor:
    """Dense n-dimensional array that can take part in a differentiation graph"""

    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 dtype: Union[str, np.dtype, None] = None, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None and isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            array = data
        else:
            array = np.asarray(data, dtype=resolve_dtype(dtype))
        if array.ndim == 0:
            array = array.reshape(1)
        if any(extent < 1 for extent in array.shape):
            raise DimensionError(f"tensor extents must be >= 1, got {array.shape}")
        self.data: np.ndarray = array
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[GradNode] = None
        self.name = name

    # ------------------------------------------------------------------ basics
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise DimensionError(f"gradient shape {grad.shape} does not match tensor shape {self.shape}")
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    # -------------------------------------------------------- operator sugar
    def __add__(self, other):
        from . import ops
        return ops.add(self, other) if isinstance(other, Tensor) else ops.affine(self, 1.0, float(other))

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other) if isinstance(other, Tensor) else ops.affine(self, 1.0, -float(other))

    def __rsub__(self, other):
        from . import ops
        return ops.affine(self, -1.0, float(other))

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other) if isinstance(other, Tensor) else ops.affine(self, float(other), 0.0)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            raise ContractError("division by a tensor is not a primitive; use scale")
        return ops.affine(self, 1.0 / float(other), 0.0)

    def __neg__(self):
        from . import ops
        return ops.affine(self, -1.0, 0.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def from_op(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """
    Wrap a primitive's forward value and backward rule into a graph tensor

    Args:
        op: Name of the primitive
        data: Forward value
        inputs: Tensors the value was computed from
        backward: Maps the output gradient to one gradient (or None) per input

    Returns:
        Output tensor recording its GradNode when any input requires grad
    """
    out = Tensor(data)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        node = GradNode(op, tuple(inputs), backward)
        node.output = out
        out.node = node
    return out


class GradGraph:
    """Ordered record of the primitives that produced a tensor"""

    def __init__(self, nodes: List[GradNode]):
        self.nodes = nodes

    @classmethod
    def trace(cls, output: Tensor) -> "GradGraph":
        """Collect the nodes reachable from output in topological order"""
        order: List[GradNode] = []
        visited = set()
        if output.node is None:
            return cls(order)
        stack: List[Tuple[GradNode, bool]] = [(output.node, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node.inputs:
                if parent.node is not None and id(parent.node) not in visited:
                    stack.append((parent.node, False))
        return cls(order)

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)


def backward(loss: Tensor, graph: Optional[GradGraph] = None) -> None:
    """
    Populate grad on every requires_grad tensor reachable from a scalar loss

    Gradients accumulate additively into existing grad buffers.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if graph is None:
        graph = GradGraph.trace(loss)

    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        out = node.output
        grad_out = pending.pop(id(out), None)
        if grad_out is None:
            continue
        out.accumulate_grad(grad_out)
        grads = node.backward(grad_out)
        for parent, grad in zip(node.inputs, grads):
            if grad is None or not parent.requires_grad:
                continue
            if grad.shape != parent.shape:
                raise DimensionError(
                    f"{node.op} backward produced {grad.shape} for input of shape {parent.shape}")
            key = id(parent)
            if parent.node is None:
                parent.accumulate_grad(grad)
            elif key in pending:
                pending[key] = pending[key] + grad
            else:
                pending[key] = grad

    if loss.node is None and loss.requires_grad:
        loss.accumulate_grad(np.ones_like(loss.data))
