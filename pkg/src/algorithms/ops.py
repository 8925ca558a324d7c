"""Differentiable tensor operations.

Each function computes its result with numpy and registers a backward rule on
the active tape. All arithmetic is float64.
"""

from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit
from scipy.special import softmax as _softmax

from src.algorithms.tensor import Tensor, emit
from src.utils.validators import ConfigurationError, ContractError, DimensionError

LOG_FLOOR = 1e-12


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(name: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise DimensionError(f"{name}: shapes {a.shape} and {b.shape} are incompatible") from e


def _require_2d(name: str, x: Tensor) -> None:
    if x.data.ndim != 2:
        raise DimensionError(f"{name}: expected a matrix, got shape {x.shape}")


def constant(values: np.ndarray) -> Tensor:
    """Wrap values that never need a gradient."""
    return Tensor.wrap(np.asarray(values, dtype=np.float64), requires_grad=False)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a [p x q] and b [q x r].

    Raises:
        DimensionError: If the inner dimensions differ
    """
    _require_2d("matmul", a)
    _require_2d("matmul", b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return g @ b.data.T, a.data.T @ g

    return emit("matmul", a.data @ b.data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum with numpy broadcasting (e.g. a bias row over a matrix)."""
    _broadcast_shape("add", a, b)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return emit("add", a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference with broadcasting."""
    _broadcast_shape("sub", a, b)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return emit("sub", a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product with broadcasting."""
    _broadcast_shape("mul", a, b)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return emit("mul", a.data * b.data, (a, b), backward)


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a constant."""
    return emit("scale", x.data * factor, (x,), lambda g: (g * factor,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return emit("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function 1 / (1 + exp(-x))."""
    out = expit(x.data)
    return emit("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x: Tensor) -> Tensor:
    """max(0, x)."""
    active = x.data > 0
    return emit("relu", np.where(active, x.data, 0.0), (x,), lambda g: (g * active,))


def transpose(x: Tensor) -> Tensor:
    _require_2d("transpose", x)
    return emit("transpose", x.data.T.copy(), (x,), lambda g: (g.T,))


def sum_all(x: Tensor) -> Tensor:
    """Sum of every entry as a scalar tensor."""

    def backward(g: np.ndarray) -> Sequence[np.ndarray]:
        return (np.broadcast_to(g, x.shape).copy(),)

    return emit("sum_all", np.array(x.data.sum()), (x,), backward)


def mean_rows(x: Tensor) -> Tensor:
    """Column means over rows: [r x c] -> [1 x c]."""
    _require_2d("mean_rows", x)
    rows = x.shape[0]
    if rows == 0:
        raise DimensionError("mean_rows: cannot average zero rows")
    out = x.data.mean(axis=0, keepdims=True)
    return emit("mean_rows", out, (x,), lambda g: (np.repeat(g / rows, rows, axis=0),))


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack matrices vertically; all parts need the same column count."""
    if len(parts) == 0:
        raise ContractError("concat_rows: nothing to concatenate")
    for part in parts:
        _require_2d("concat_rows", part)
        if part.shape[1] != parts[0].shape[1]:
            raise DimensionError(f"concat_rows: cannot stack {parts[0].shape} with {part.shape}")
    bounds = np.cumsum([p.shape[0] for p in parts])[:-1]

    def backward(g: np.ndarray) -> Sequence[np.ndarray]:
        return np.split(g, bounds, axis=0)

    joined = np.concatenate([p.data for p in parts], axis=0)
    return emit("concat_rows", joined, tuple(parts), backward)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Join matrices side by side; all parts need the same row count."""
    if len(parts) == 0:
        raise ContractError("concat_cols: nothing to concatenate")
    for part in parts:
        _require_2d("concat_cols", part)
        if part.shape[0] != parts[0].shape[0]:
            raise DimensionError(f"concat_cols: cannot join {parts[0].shape} with {part.shape}")
    bounds = np.cumsum([p.shape[1] for p in parts])[:-1]

    def backward(g: np.ndarray) -> Sequence[np.ndarray]:
        return np.split(g, bounds, axis=1)

    joined = np.concatenate([p.data for p in parts], axis=1)
    return emit("concat_cols", joined, tuple(parts), backward)


def broadcast_rows(x: Tensor, rows: int) -> Tensor:
    """Repeat a [1 x c] row vector into [rows x c]."""
    _require_2d("broadcast_rows", x)
    if x.shape[0] != 1:
        raise DimensionError(f"broadcast_rows: expected a row vector, got {x.shape}")
    out = np.repeat(x.data, rows, axis=0)
    return emit("broadcast_rows", out, (x,), lambda g: (g.sum(axis=0, keepdims=True),))


def softmax_rows(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Row-wise softmax with optional masking.

    Args:
        x: Logits [r x c]
        mask: Boolean array broadcastable to [r x c]; False entries receive an
            additive -inf before normalisation and therefore exactly zero mass

    Raises:
        ContractError: If a row has every position masked
    """
    _require_2d("softmax_rows", x)
    logits = x.data
    if mask is not None:
        valid = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
        if not np.all(valid.any(axis=1)):
            raise ContractError("softmax_rows: a row has no unmasked positions")
        logits = np.where(valid, logits, -np.inf)
    out = _softmax(logits, axis=1)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return emit("softmax_rows", out, (x,), backward)


def gather_rows(table: Tensor, indices: np.ndarray) -> Tensor:
    """Embedding lookup: row j of the result is ``table[indices[j]]``.

    Raises:
        ContractError: If an index is outside the table
    """
    _require_2d("gather_rows", table)
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ContractError(
            f"gather_rows: index out of range for table with {table.shape[0]} rows"
        )

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = np.zeros_like(table.data)
        np.add.at(grad, idx, g)
        return (grad,)

    return emit("gather_rows", table.data[idx], (table,), backward)


def segment_mean(x: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Average rows of x that share a segment id.

    Args:
        x: Rows to average [n x c]
        segments: Segment id per row, values in [0, num_segments)
        num_segments: Output row count; every segment must own at least one row

    Raises:
        ContractError: If a segment is empty
    """
    _require_2d("segment_mean", x)
    seg = np.asarray(segments, dtype=np.int64).reshape(-1)
    if seg.size != x.shape[0]:
        raise DimensionError(f"segment_mean: {seg.size} segment ids for {x.shape[0]} rows")
    counts = np.bincount(seg, minlength=num_segments).astype(np.float64)
    if np.any(counts == 0):
        raise ContractError("segment_mean: every segment needs at least one row")
    out = np.zeros((num_segments, x.shape[1]))
    np.add.at(out, seg, x.data)
    out /= counts[:, None]

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (g[seg] / counts[seg][:, None],)

    return emit("segment_mean", out, (x,), backward)


def conv1d_same(x: Tensor, w: Tensor, width: int) -> Tensor:
    """One-dimensional convolution with zero "same" padding and stride 1.

    Position j of the output is the flattened window ``x[j-p .. j+p]`` (rows
    outside the sequence read as zeros, p = floor(width / 2)) multiplied by w.

    Args:
        x: Sequence [n x d_in]
        w: Filter bank [(width * d_in) x d_out]; row blocks follow window order
        width: Odd kernel width

    Raises:
        ConfigurationError: If width is even or not positive
        DimensionError: If w does not match width * d_in rows
    """
    _require_2d("conv1d_same", x)
    _require_2d("conv1d_same", w)
    if width < 1 or width % 2 == 0:
        raise ConfigurationError(f"conv1d_same: kernel width must be odd, got {width}")
    n, d_in = x.shape
    if w.shape[0] != width * d_in:
        raise DimensionError(
            f"conv1d_same: filter {w.shape} does not fit width {width} over input {x.shape}"
        )
    pad = width // 2
    padded = np.pad(x.data, ((pad, pad), (0, 0)))
    # (n, d_in, width) -> (n, width, d_in) -> one flattened window per row
    cols = sliding_window_view(padded, width, axis=0).transpose(0, 2, 1).reshape(n, width * d_in)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        grad_cols = (g @ w.data.T).reshape(n, width, d_in)
        grad_padded = np.zeros_like(padded)
        for k in range(width):
            grad_padded[k : k + n] += grad_cols[:, k, :]
        return grad_padded[pad : pad + n], cols.T @ g

    return emit("conv1d_same", cols @ w.data, (x, w), backward)


def mask_rows(x: Tensor, mask: np.ndarray) -> Tensor:
    """Zero the rows whose mask entry is False."""
    _require_2d("mask_rows", x)
    keep = np.asarray(mask, dtype=np.float64).reshape(-1, 1)
    if keep.shape[0] != x.shape[0]:
        raise DimensionError(f"mask_rows: mask of length {keep.shape[0]} for {x.shape[0]} rows")
    return emit("mask_rows", x.data * keep, (x,), lambda g: (g * keep,))


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: scale kept entries by 1 / (1 - rate) during training.

    Returns x itself at evaluation time or when rate is zero.
    """
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return emit("dropout", x.data * keep, (x,), lambda g: (g * keep,))


def binary_cross_entropy(probs: Tensor, targets: np.ndarray) -> Tensor:
    """Summed binary cross-entropy with logarithms clamped at 1e-12.

    Args:
        probs: Predicted probabilities
        targets: 0/1 array of the same shape

    Returns:
        Scalar tensor ``sum(-y log p - (1 - y) log(1 - p))``
    """
    y = np.asarray(targets, dtype=np.float64).reshape(probs.shape)
    p = probs.data
    pos = np.maximum(p, LOG_FLOOR)
    neg = np.maximum(1.0 - p, LOG_FLOOR)
    value = -(y * np.log(pos) + (1.0 - y) * np.log(neg)).sum()

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        d_pos = np.where(p > LOG_FLOOR, -y / pos, 0.0)
        d_neg = np.where(1.0 - p > LOG_FLOOR, (1.0 - y) / neg, 0.0)
        return (g * (d_pos + d_neg),)

    return emit("binary_cross_entropy", np.array(value), (probs,), backward)
