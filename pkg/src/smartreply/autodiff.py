"""Dense tensor math with reverse-mode differentiation on a recording tape.

The models in this package need roughly a dozen op kinds: matmul,
broadcasting add/mul, tanh/sigmoid/exp/log, concatenation and slicing,
row/column reductions, and embedding-row gather. Ops execute eagerly on
numpy arrays; while a :class:`Tape` is active each op also records a closure
that propagates gradients in exact reverse recording order. Inference code
runs with no tape and pays no bookkeeping cost.

Values are float32 by default (float64 is allowed so the gradient checker
can run at higher precision). NaN/Inf is an error state: ``exp``/``log``
outputs are always validated, and ``set_debug_checks(True)`` widens the
check to every op output.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericsError

Shape = tuple[int, ...]

_DEBUG_CHECKS = False


def set_debug_checks(enabled: bool) -> None:
    """Validate finiteness of every op output (slow; meant for tests)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = enabled


class Tensor:
    """Immutable dense array node.

    ``data`` is a C-contiguous numpy array (float32 unless the caller opted
    into float64). Tensors are hashable by identity; the tape keys its
    gradient map on that identity, so never mutate ``data`` after wrapping.
    """

    __slots__ = ("data",)

    def __init__(self, data, dtype=np.float32) -> None:
        if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
            arr = np.ascontiguousarray(data)  # keep float64 for grad checking
        else:
            arr = np.ascontiguousarray(data, dtype=dtype)
        self.data: np.ndarray = arr

    @property
    def shape(self) -> Shape:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


def as_tensor(value, dtype=np.float32) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def constant(value, dtype=np.float32) -> Tensor:
    """A leaf tensor that never receives gradient (plain data)."""
    return as_tensor(value, dtype=dtype)


# --------------------------------------------------------------------------
# Tape


class Tape:
    """Ordered op recording; backward replays it in exact reverse order."""

    def __init__(self) -> None:
        # (output, inputs, backward_fn); backward_fn(out_grad, accumulate)
        self._ops: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._active_token = None

    def __enter__(self) -> "Tape":
        _push_tape(self)
        return self

    def __exit__(self, *exc) -> None:
        _pop_tape(self)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn: Callable) -> None:
        self._ops.append((out, inputs, backward_fn))

    def __len__(self) -> int:
        return len(self._ops)

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Gradients of ``loss`` w.r.t. every tensor reached on this tape.

        Leaves that do not reach ``loss`` are simply absent from the map;
        use :meth:`grad` to get explicit zeros for a parameter list.
        """
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not np.isfinite(loss.data).all():
            raise NumericsError("loss is not finite")
        grads: dict[Tensor, np.ndarray] = {loss: np.ones_like(loss.data)}

        def accumulate(t: Tensor, g: np.ndarray) -> None:
            if g.shape != t.data.shape:
                raise DimensionError(
                    f"gradient shape {g.shape} does not match value shape {t.data.shape}"
                )
            prev = grads.get(t)
            grads[t] = g if prev is None else prev + g

        for out, inputs, backward_fn in reversed(self._ops):
            g = grads.get(out)
            if g is None:
                continue  # node not on any path to the loss
            backward_fn(g, accumulate)
        return grads

    def grad(self, loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
        """Per-parameter gradients; zeros for params not reaching the loss."""
        grads = self.backward(loss)
        return [grads.get(p, np.zeros_like(p.data)) for p in params]


_TLS = threading.local()


def _push_tape(tape: Tape) -> None:
    stack = getattr(_TLS, "stack", None)
    if stack is None:
        stack = _TLS.stack = []
    stack.append(tape)


def _pop_tape(tape: Tape) -> None:
    stack = _TLS.stack
    if not stack or stack[-1] is not tape:
        raise RuntimeError("tape context exited out of order")
    stack.pop()


def active_tape() -> Tape | None:
    stack = getattr(_TLS, "stack", None)
    return stack[-1] if stack else None


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    return tape.backward(loss)


# --------------------------------------------------------------------------
# RNG


class Rng:
    """Seed-deterministic random source (PCG64 stream).

    Identical seed, identical call sequence -> identical samples. Own one
    per thread / per request; never share across concurrent users.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def standard_normal(self, shape, dtype=np.float32) -> np.ndarray:
        return self._gen.standard_normal(shape, dtype=dtype)

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape).astype(np.float32)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, p: np.ndarray | None = None) -> int:
        return int(self._gen.choice(n, p=p))

    def spawn(self, salt: int) -> "Rng":
        """Derive an independent child stream (for sharded generation)."""
        return Rng((self.seed * 1_000_003 + salt) % (2**63))


def sample_gaussian(rng: Rng, shape, dtype=np.float32) -> Tensor:
    """I.i.d. standard-normal tensor; advances the rng state."""
    if isinstance(shape, int):
        shape = (shape,)
    if len(tuple(shape)) == 0:
        raise ContractError("sample_gaussian needs a nonempty shape")
    return Tensor(rng.standard_normal(tuple(shape), dtype=dtype))


# --------------------------------------------------------------------------
# Op helpers


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NumericsError(f"{op} produced non-finite values")
    return arr


def _make(out_data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn: Callable, op: str) -> Tensor:
    if _DEBUG_CHECKS:
        _check_finite(out_data, op)
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None:
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: Shape) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# --------------------------------------------------------------------------
# Ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def bwd(g, acc):
        acc(a, _unbroadcast(g, a.shape))
        acc(b, _unbroadcast(g, b.shape))

    return _make(out, (a, b), bwd, "add")


def neg(a) -> Tensor:
    a = as_tensor(a)

    def bwd(g, acc):
        acc(a, -g)

    return _make(-a.data, (a,), bwd, "neg")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def bwd(g, acc):
        acc(a, _unbroadcast(g, a.shape))
        acc(b, _unbroadcast(-g, b.shape))

    return _make(out, (a, b), bwd, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def bwd(g, acc):
        acc(a, _unbroadcast(g * b.data, a.shape))
        acc(b, _unbroadcast(g * a.data, b.shape))

    return _make(out, (a, b), bwd, "mul")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def bwd(g, acc):
        acc(a, g @ b.data.T)
        acc(b, a.data.T @ g)

    return _make(out, (a, b), bwd, "matmul")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def bwd(g, acc):
        acc(a, g * (1.0 - out * out))

    return _make(out, (a,), bwd, "tanh")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # stable logistic: exp only of non-positive arguments
    x = a.data
    t = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t)).astype(x.dtype)

    def bwd(g, acc):
        acc(a, g * out * (1.0 - out))

    return _make(out, (a,), bwd, "sigmoid")


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = _check_finite(np.exp(a.data), "exp")

    def bwd(g, acc):
        acc(a, g * out)

    return _make(out, (a,), bwd, "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="raise", invalid="raise"):
        try:
            out = np.log(a.data)
        except FloatingPointError as e:
            raise NumericsError(f"log of non-positive value: {e}") from None
    _check_finite(out, "log")

    def bwd(g, acc):
        acc(a, g / a.data)

    return _make(out, (a,), bwd, "log")


def clip(a, low: float, high: float) -> Tensor:
    """Clamp values to [low, high]; gradient passes only inside the range."""
    a = as_tensor(a)
    out = np.clip(a.data, low, high)
    inside = ((a.data > low) & (a.data < high)).astype(a.data.dtype)

    def bwd(g, acc):
        acc(a, g * inside)

    return _make(out, (a,), bwd, "clip")


def concat(parts: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("concat of zero tensors")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g, acc):
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(start, stop)
            acc(p, np.ascontiguousarray(g[tuple(idx)]))

    return _make(out, tuple(parts), bwd, "concat")


def narrow(a, axis: int, start: int, size: int) -> Tensor:
    """Contiguous slice along one axis; gradient scatters back."""
    a = as_tensor(a)
    if start < 0 or start + size > a.shape[axis]:
        raise DimensionError(f"narrow [{start}:{start + size}) outside axis {axis} of {a.shape}")
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + size)
    out = np.ascontiguousarray(a.data[tuple(idx)])

    def bwd(g, acc):
        full = np.zeros_like(a.data)
        full[tuple(idx)] = g
        acc(a, full)

    return _make(out, (a,), bwd, "narrow")


def tensor_sum(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g, acc):
        if axis is None:
            acc(a, np.broadcast_to(g, a.shape).astype(a.data.dtype))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            acc(a, np.broadcast_to(gg, a.shape).astype(a.data.dtype))

    return _make(np.asarray(out), (a,), bwd, "sum")


def mean(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    total = tensor_sum(a, axis=axis, keepdims=keepdims)
    return mul(total, constant(1.0 / count, dtype=total.data.dtype))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise DimensionError(f"transpose needs a 2-D tensor, got {a.shape}")

    def bwd(g, acc):
        acc(a, np.ascontiguousarray(g.T))

    return _make(np.ascontiguousarray(a.data.T), (a,), bwd, "transpose")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def bwd(g, acc):
        acc(a, g.reshape(a.shape))

    return _make(np.ascontiguousarray(out), (a,), bwd, "reshape")


def diag_part(a) -> Tensor:
    """Diagonal of a square matrix as a vector."""
    a = as_tensor(a)
    if a.data.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"diag_part needs a square matrix, got {a.shape}")
    n = a.shape[0]

    def bwd(g, acc):
        full = np.zeros_like(a.data)
        np.fill_diagonal(full, g)
        acc(a, full)

    return _make(np.ascontiguousarray(np.diagonal(a.data)), (a,), bwd, "diag_part")


def gather_rows(table, ids) -> Tensor:
    """Embedding lookup: rows of ``table`` selected by integer ``ids``."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise DimensionError(f"gather_rows needs 1-D ids, got shape {ids.shape}")
    out = table.data[ids]

    def bwd(g, acc):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        acc(table, full)

    return _make(np.ascontiguousarray(out), (table,), bwd, "gather_rows")


def detached_max(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    """Max as a constant (stop-gradient), for log-sum-exp style shifts.

    Subtracting a detached max before exp leaves both the value and the
    gradient of the surrounding log-normalizer exact (the max's own
    derivative cancels), so no gradient rule is needed.
    """
    return constant(np.max(as_tensor(a).data, axis=axis, keepdims=keepdims))


# --------------------------------------------------------------------------
# Gradient checking


def grad_check(
    f: Callable[[Sequence[Tensor]], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-3,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` must be deterministic given ``params`` (freeze any noise source
    before calling). Params are upcast to float64 so the finite-difference
    reference is not drowned by f32 rounding; the relative error is
    ``|analytic - fd| / max(|analytic|, |fd|, 1e-8)`` maximized over every
    element of every parameter.
    """
    params64 = [Tensor(p.data.astype(np.float64)) for p in params]
    with Tape() as tape:
        loss = f(params64)
    analytic = tape.grad(loss, params64)

    worst = 0.0
    for p_idx, (p, g) in enumerate(zip(params64, analytic)):
        flat = p.data.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(params64).item()
            flat[i] = orig - h
            fm = f(params64).item()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericsError(f"non-finite loss while perturbing param {p_idx}[{i}]")
            fd = (fp - fm) / (2.0 * h)
            err = abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd), 1e-8)
            worst = max(worst, err)
    return worst
