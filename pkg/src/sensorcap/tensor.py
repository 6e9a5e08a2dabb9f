"""Dense float64 tensors with tape-based reverse-mode differentiation.

Design rules:

* 64-bit floats, row-major, everywhere.
* Shapes must match exactly; the only implicit broadcast is a true scalar.
  Row-wise forms (`affine` bias, `scale_rows`, `div_rows`) are explicit ops
  with their own adjoints rather than silent broadcasting.
* Gradients are recorded define-by-run on the innermost active `Tape`.
  Outside a tape every op is a plain forward evaluation (inference mode).
* A chronologically reversed tape replay is a valid reverse-topological
  traversal because an op's inputs always precede it on the tape.

`st_threshold` and `st_onehot` are straight-through estimators: their
forward is a hard decision, their backward passes the upstream gradient
through unchanged.  They are the one place where the tape's gradient is
intentionally not the derivative of the forward map.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NumericError

_tape_stack: list["Tape"] = []


class Tensor:
    """A dense float64 array plus an optional accumulated gradient."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the named functions below are the actual primitives.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of recorded ops, replayed in reverse for adjoints."""

    def __init__(self):
        self._records: list[Callable[[], None]] = []

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _tape_stack.pop()
        assert popped is self, "tapes must unwind in LIFO order"

    def record(self, backward_fn: Callable[[], None]) -> None:
        self._records.append(backward_fn)

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss) = 1 and replay each record exactly once."""
        if loss.data.shape != ():
            raise DimensionError(
                f"backward expects a scalar loss, got shape {loss.data.shape}"
            )
        loss.grad = np.ones(())
        for fn in reversed(self._records):
            fn()


def active_tape() -> Tape | None:
    return _tape_stack[-1] if _tape_stack else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _acc(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros(t.data.shape)
    t.grad += g


def _track(out: Tensor, inputs: Sequence[Tensor], backward) -> Tensor:
    """Attach `backward(upstream_grad)` to the active tape if needed."""
    if _tape_stack and any(t.requires_grad for t in inputs):
        out.requires_grad = True

        def _replay():
            if out.grad is not None:
                backward(out.grad)

        _tape_stack[-1].record(_replay)
    return out


def _check_same_or_scalar(a: Tensor, b: Tensor, opname: str) -> None:
    if a.data.shape != b.data.shape and a.data.shape != () and b.data.shape != ():
        raise DimensionError(
            f"{opname}: shapes {a.data.shape} and {b.data.shape} differ and "
            "neither is a scalar"
        )


def _reduce_to(shape: tuple[int, ...], g: np.ndarray) -> np.ndarray:
    # Undo a scalar broadcast when accumulating into the scalar operand.
    return g if g.shape == shape else np.sum(g)


# ---------------------------------------------------------------------------
# Arithmetic primitives
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_or_scalar(a, b, "add")
    out = Tensor(a.data + b.data)

    def _bw(g):
        if a.requires_grad:
            _acc(a, _reduce_to(a.data.shape, g))
        if b.requires_grad:
            _acc(b, _reduce_to(b.data.shape, g))

    return _track(out, (a, b), _bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_or_scalar(a, b, "sub")
    out = Tensor(a.data - b.data)

    def _bw(g):
        if a.requires_grad:
            _acc(a, _reduce_to(a.data.shape, g))
        if b.requires_grad:
            _acc(b, -_reduce_to(b.data.shape, g))

    return _track(out, (a, b), _bw)


def neg(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(-a.data)

    def _bw(g):
        if a.requires_grad:
            _acc(a, -g)

    return _track(out, (a,), _bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_or_scalar(a, b, "mul")
    ad, bd = a.data, b.data
    out = Tensor(ad * bd)

    def _bw(g):
        if a.requires_grad:
            _acc(a, _reduce_to(a.data.shape, g * bd))
        if b.requires_grad:
            _acc(b, _reduce_to(b.data.shape, g * ad))

    return _track(out, (a, b), _bw)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul needs 2-d operands, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions disagree, {a.data.shape} x {b.data.shape}"
        )
    ad, bd = a.data, b.data
    out = Tensor(ad @ bd)

    def _bw(g):
        if a.requires_grad:
            _acc(a, g @ bd.T)
        if b.requires_grad:
            _acc(b, ad.T @ g)

    return _track(out, (a, b), _bw)


def affine(x, w, b) -> Tensor:
    """x @ w + b with the bias added to every row of the product."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 2 or w.data.ndim != 2 or b.data.ndim != 1:
        raise DimensionError(
            f"affine expects (B,D) @ (D,H) + (H,), got "
            f"{x.data.shape}, {w.data.shape}, {b.data.shape}"
        )
    if x.data.shape[1] != w.data.shape[0] or w.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"affine: incompatible shapes {x.data.shape}, {w.data.shape}, "
            f"{b.data.shape}"
        )
    xd, wd = x.data, w.data
    out = Tensor(xd @ wd + b.data)

    def _bw(g):
        if x.requires_grad:
            _acc(x, g @ wd.T)
        if w.requires_grad:
            _acc(w, xd.T @ g)
        if b.requires_grad:
            _acc(b, g.sum(axis=0))

    return _track(out, (x, w, b), _bw)


# ---------------------------------------------------------------------------
# Shape primitives
# ---------------------------------------------------------------------------


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise DimensionError("concat of zero tensors")
    try:
        out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    except ValueError as e:
        raise DimensionError(f"concat: {e}") from e
    ax = axis if axis >= 0 else parts[0].data.ndim + axis
    sizes = [p.data.shape[ax] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def _bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                idx = [np.s_[:]] * g.ndim
                idx[ax] = np.s_[lo:hi]
                _acc(p, g[tuple(idx)])

    return _track(out, parts, _bw)


def slice(x, axis: int, start: int, stop: int) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    ax = axis if axis >= 0 else x.data.ndim + axis
    if not (0 <= ax < x.data.ndim):
        raise DimensionError(f"slice: axis {axis} out of range for {x.data.shape}")
    if not (0 <= start <= stop <= x.data.shape[ax]):
        raise DimensionError(
            f"slice: range [{start}:{stop}] invalid for extent {x.data.shape[ax]}"
        )
    idx = [np.s_[:]] * x.data.ndim
    idx[ax] = np.s_[start:stop]
    idx = tuple(idx)
    out = Tensor(x.data[idx].copy())

    def _bw(g):
        if x.requires_grad:
            full = np.zeros(x.data.shape)
            full[idx] = g
            _acc(x, full)

    return _track(out, (x,), _bw)


# ---------------------------------------------------------------------------
# Elementwise nonlinearities
# ---------------------------------------------------------------------------


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(y)

    def _bw(g):
        if x.requires_grad:
            _acc(x, g * y * (1.0 - y))

    return _track(out, (x,), _bw)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    out = Tensor(y)

    def _bw(g):
        if x.requires_grad:
            _acc(x, g * (1.0 - y * y))

    return _track(out, (x,), _bw)


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    out = Tensor(y)

    def _bw(g):
        if x.requires_grad:
            _acc(x, g * y)

    return _track(out, (x,), _bw)


def log(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    out = Tensor(np.log(xd))

    def _bw(g):
        if x.requires_grad:
            _acc(x, g / xd)

    return _track(out, (x,), _bw)


# ---------------------------------------------------------------------------
# Reductions and row-wise forms
# ---------------------------------------------------------------------------


def sum(x) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = Tensor(np.sum(x.data))

    def _bw(g):
        if x.requires_grad:
            _acc(x, np.full(x.data.shape, float(g)))

    return _track(out, (x,), _bw)


def mean(x) -> Tensor:
    x = as_tensor(x)
    n = x.data.size
    out = Tensor(np.mean(x.data))

    def _bw(g):
        if x.requires_grad:
            _acc(x, np.full(x.data.shape, float(g) / n))

    return _track(out, (x,), _bw)


def sum_rows(x) -> Tensor:
    """(B, n) -> (B, 1) row sums."""
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"sum_rows expects a matrix, got {x.data.shape}")
    out = Tensor(x.data.sum(axis=1, keepdims=True))

    def _bw(g):
        if x.requires_grad:
            _acc(x, np.broadcast_to(g, x.data.shape))

    return _track(out, (x,), _bw)


def scale_rows(x, s) -> Tensor:
    """Multiply row i of (B, n) by scalar s[i]; s has shape (B, 1)."""
    x, s = as_tensor(x), as_tensor(s)
    if x.data.ndim != 2 or s.data.shape != (x.data.shape[0], 1):
        raise DimensionError(
            f"scale_rows expects (B,n) and (B,1), got {x.data.shape}, {s.data.shape}"
        )
    xd, sd = x.data, s.data
    out = Tensor(xd * sd)

    def _bw(g):
        if x.requires_grad:
            _acc(x, g * sd)
        if s.requires_grad:
            _acc(s, (g * xd).sum(axis=1, keepdims=True))

    return _track(out, (x, s), _bw)


def div_rows(x, s) -> Tensor:
    """Divide row i of (B, n) by scalar s[i]; s has shape (B, 1)."""
    x, s = as_tensor(x), as_tensor(s)
    if x.data.ndim != 2 or s.data.shape != (x.data.shape[0], 1):
        raise DimensionError(
            f"div_rows expects (B,n) and (B,1), got {x.data.shape}, {s.data.shape}"
        )
    xd, sd = x.data, s.data
    y = xd / sd
    out = Tensor(y)

    def _bw(g):
        if x.requires_grad:
            _acc(x, g / sd)
        if s.requires_grad:
            _acc(s, -(g * y / sd).sum(axis=1, keepdims=True))

    return _track(out, (x, s), _bw)


# ---------------------------------------------------------------------------
# Softmax family
# ---------------------------------------------------------------------------


def softmax(x, temperature: float = 1.0) -> Tensor:
    """Stable softmax over the last axis of a vector or matrix.

    `temperature` divides the logits first; smaller values sharpen the
    output toward a one-hot vector.
    """
    x = as_tensor(x)
    if temperature <= 0:
        raise ValueError(f"softmax temperature must be positive, got {temperature}")
    if x.data.ndim not in (1, 2):
        raise DimensionError(f"softmax expects a vector or matrix, got {x.data.shape}")
    if x.data.shape[-1] < 1:
        raise DimensionError("softmax over an empty axis")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax input contains non-finite values")
    z = x.data / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def _bw(g):
        if x.requires_grad:
            inner = (g * y).sum(axis=-1, keepdims=True)
            _acc(x, y * (g - inner) / temperature)

    return _track(out, (x,), _bw)


def cross_entropy(logits, target: int) -> Tensor:
    """-log softmax(logits)[target] for a single logit vector."""
    logits = as_tensor(logits)
    if logits.data.ndim != 1:
        raise DimensionError(
            f"cross_entropy expects a logit vector, got {logits.data.shape}"
        )
    vocab = logits.data.shape[0]
    target = int(target)
    if not 0 <= target < vocab:
        raise IndexError(f"cross_entropy target {target} outside vocab of {vocab}")
    zd = logits.data
    m = zd.max()
    lse = m + np.log(np.exp(zd - m).sum())
    out = Tensor(lse - zd[target])

    def _bw(g):
        if logits.requires_grad:
            p = np.exp(zd - lse)
            p[target] -= 1.0
            _acc(logits, float(g) * p)

    return _track(out, (logits,), _bw)


def cross_entropy_rows(logits, targets) -> Tensor:
    """Per-row -log softmax(logits)[target]; logits (B, V), targets (B,) ints."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or targets.shape != (logits.data.shape[0],):
        raise DimensionError(
            f"cross_entropy_rows expects (B,V) logits and (B,) targets, got "
            f"{logits.data.shape}, {targets.shape}"
        )
    vocab = logits.data.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise IndexError("cross_entropy_rows: target id outside vocabulary")
    zd = logits.data
    m = zd.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(zd - m).sum(axis=1, keepdims=True))
    rows = np.arange(zd.shape[0])
    out = Tensor(lse[:, 0] - zd[rows, targets])

    def _bw(g):
        if logits.requires_grad:
            p = np.exp(zd - lse)
            p[rows, targets] -= 1.0
            _acc(logits, p * g[:, None])

    return _track(out, (logits,), _bw)


# ---------------------------------------------------------------------------
# Lookup / discrete helpers
# ---------------------------------------------------------------------------


def embedding_lookup(table, ids) -> Tensor:
    """Select rows of (V, E) by integer ids; gradient scatter-adds."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise DimensionError(f"embedding table must be 2-d, got {table.data.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError("embedding_lookup: id outside table")
    out = Tensor(table.data[ids])

    def _bw(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros(table.data.shape)
            np.add.at(table.grad, ids, g)

    return _track(out, (table,), _bw)


def argmax(x, axis: int = -1) -> np.ndarray:
    """Plain integer argmax; not differentiable, returns a numpy array."""
    x = as_tensor(x)
    return np.argmax(x.data, axis=axis)


def one_hot(ids, depth: int) -> Tensor:
    """Constant one-hot rows for integer id(s)."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= depth):
        raise IndexError(f"one_hot: id outside depth {depth}")
    eye = np.zeros(ids.shape + (depth,))
    np.put_along_axis(
        eye.reshape(-1, depth), ids.reshape(-1, 1), 1.0, axis=1
    )
    return Tensor(eye.reshape(ids.shape + (depth,)))


# ---------------------------------------------------------------------------
# Straight-through estimators
# ---------------------------------------------------------------------------


def st_threshold(x, threshold: float = 0.5) -> Tensor:
    """Hard 0/1 threshold forward, identity gradient backward."""
    x = as_tensor(x)
    out = Tensor((x.data > threshold).astype(np.float64))

    def _bw(g):
        if x.requires_grad:
            _acc(x, g)

    return _track(out, (x,), _bw)


def st_onehot(x) -> Tensor:
    """Row-wise one-hot of the argmax forward, identity gradient backward."""
    x = as_tensor(x)
    if x.data.ndim not in (1, 2):
        raise DimensionError(f"st_onehot expects a vector or matrix, got {x.data.shape}")
    idx = np.argmax(x.data, axis=-1)
    hard = np.zeros(x.data.shape)
    if x.data.ndim == 1:
        hard[idx] = 1.0
    else:
        hard[np.arange(x.data.shape[0]), idx] = 1.0
    out = Tensor(hard)

    def _bw(g):
        if x.requires_grad:
            _acc(x, g)

    return _track(out, (x,), _bw)
