"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations in ``src.algorithms.ops`` record themselves on the innermost active
``Tape``. Calling ``Tape.backward(loss)`` replays the recording in reverse and
accumulates gradients into every ``requires_grad`` leaf reachable from the loss.
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.validators import ContractError

BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_ACTIVE_TAPES: List["Tape"] = []


class Tensor:
    """An n-dimensional float64 array with an optional gradient slot.

    Attributes:
        data: Row-major float64 values
        requires_grad: Whether gradients should flow into this tensor
        grad: Accumulated gradient, same shape as data, or None before backward
        name: Optional label used in diagnostics
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None) -> None:
        self.data: np.ndarray = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def wrap(cls, array: np.ndarray, requires_grad: bool = False) -> "Tensor":
        """Wrap an existing float64 array without copying."""
        tensor = cls.__new__(cls)
        tensor.data = array
        tensor.requires_grad = requires_grad
        tensor.grad = None
        tensor.name = None
        return tensor

    @classmethod
    def zeros(cls, *shape: int, requires_grad: bool = False) -> "Tensor":
        """Create a zero-filled tensor."""
        return cls.wrap(np.zeros(shape, dtype=np.float64), requires_grad)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        """Return the single value of a one-element tensor."""
        if self.data.size != 1:
            raise ContractError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """Return a copy of the values."""
        return self.data.copy()

    def zero_grad(self) -> None:
        """Reset the gradient buffer to zeros."""
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"


@dataclass(frozen=True)
class TapeEntry:
    """One recorded operation.

    Attributes:
        op: Operation name
        inputs: Operand tensors in call order
        output: Result tensor
        backward: Maps the output gradient to one gradient (or None) per input
    """

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardRule


class Tape:
    """Ordered record of differentiable operations.

    A tape is single-owner. Use it as a context manager so that operations
    executed inside the block are recorded:

    Example:
        >>> w = Tensor([[1.0, 2.0]], requires_grad=True)
        >>> with Tape() as tape:
        ...     loss = ops.sum_all(ops.mul(w, w))
        >>> tape.backward(loss)
        >>> w.grad
        array([[2., 4.]])
    """

    def __init__(self) -> None:
        self.entries: List[TapeEntry] = []

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc_info: object) -> None:
        if _ACTIVE_TAPES and _ACTIVE_TAPES[-1] is self:
            _ACTIVE_TAPES.pop()
        elif self in _ACTIVE_TAPES:
            _ACTIVE_TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, entry: TapeEntry) -> None:
        self.entries.append(entry)

    def backward(self, loss: Tensor, parameters: Optional[Iterable[Tensor]] = None) -> None:
        """Propagate gradients from a scalar loss to every leaf.

        Gradients are accumulated into ``grad`` (added to any existing value),
        so a tensor used several times receives the sum of its contributions.

        Args:
            loss: Scalar tensor produced while this tape was active
            parameters: Tensors that must end up with a gradient buffer even
                when the loss does not depend on them (they receive zeros)

        Raises:
            ContractError: If the loss is not a single value
        """
        if loss.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")

        produced = {id(entry.output) for entry in self.entries}
        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: Dict[int, Tensor] = {}

        for entry in reversed(self.entries):
            upstream = grads.pop(id(entry.output), None)
            if upstream is None:
                continue
            for tensor, grad in zip(entry.inputs, entry.backward(upstream)):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = grad
                if key not in produced:
                    leaves[key] = tensor

        if id(loss) not in produced and loss.requires_grad:
            leaves[id(loss)] = loss

        for key, tensor in leaves.items():
            grad = grads[key].reshape(tensor.data.shape)
            tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad

        for tensor in parameters or ():
            if tensor.grad is None:
                tensor.zero_grad()


def active_tape() -> Optional[Tape]:
    """Return the innermost active tape, if any."""
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


def emit(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardRule) -> Tensor:
    """Create an op result and record it on the active tape when needed."""
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor.wrap(data, requires_grad)
    tape = active_tape()
    if requires_grad and tape is not None:
        tape.record(TapeEntry(op, tuple(inputs), out, backward))
    return out
