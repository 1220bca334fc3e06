"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every model in the package is written against this module: parameters are
leaf :class:`Tensor` objects with ``requires_grad=True``, a forward pass
records a graph of closures, and :func:`backward` walks it in reverse
topological order.  numpy does the array arithmetic.

Randomness comes from :class:`RngState`, a counter-based splitmix64 stream,
so a ``(seed, position)`` pair fully determines every subsequent draw.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .exceptions import ContractError, DimensionError, NumericDomainError

__all__ = [
    "Tensor",
    "RngState",
    "no_grad",
    "is_grad_enabled",
    "tensor",
    "zeros",
    "ones",
    "matmul",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "tanh",
    "sigmoid",
    "gelu",
    "relu",
    "softmax",
    "log_softmax",
    "layer_norm",
    "concat",
    "reshape",
    "transpose",
    "sum",
    "mean",
    "embedding",
    "dropout",
    "sample_standard_normal",
    "backward",
    "gradient_check",
]

_GRAD_ENABLED = True
_DTYPE = np.float64


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (evaluation passes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextlib.contextmanager
def extended_precision() -> Iterator[None]:
    """Build new tensors as ``np.longdouble`` inside the block.

    Used by :func:`gradient_check` so the finite-difference reference is not
    limited by float64 rounding.
    """
    global _DTYPE
    prev = _DTYPE
    _DTYPE = np.longdouble
    try:
        yield
    finally:
        _DTYPE = prev


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse mode.

    Leaves created by the user keep their gradient in ``grad``; interior
    nodes hold a backward closure that maps the output gradient to one
    gradient per parent (``None`` where the parent needs none).
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    # ---- array-like surface -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # ---- operators ------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return _index(self, index)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def _not_scalar(t: Tensor):
    raise ContractError(f"item() needs a single-element tensor, got shape {t.shape}")


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=requires_grad, name=name)


def zeros(*shape: int, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(*shape: int, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_finite(x: Tensor, op: str) -> None:
    if not np.all(np.isfinite(x.data)):
        raise NumericDomainError(f"{op}: input contains NaN or Inf")


# ---- linear algebra -------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product with numpy ``matmul`` broadcasting over leading axes."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def _bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _make(out, (a, b), _bw)


# ---- elementwise binary -----------------------------------------------------------


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape == b.data.shape or not b.data.shape:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "add")

    def _bw(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return _make(a.data + b.data, (a, b), _bw)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def _bw(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(-g, b.shape) if b.requires_grad else None,
        )

    return _make(a.data - b.data, (a, b), _bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def _bw(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return _make(a.data * b.data, (a, b), _bw)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def _bw(g):
        return (
            _unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None,
        )

    return _make(out, (a, b), _bw)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


# ---- elementwise unary --------------------------------------------------------------


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0):
        raise NumericDomainError("log: non-positive input")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ez = np.exp(x[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = _stable_sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a) -> Tensor:
    """GELU, tanh approximation."""
    a = _as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def _bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _make(out, (a,), _bw)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    pos = a.data > 0
    return _make(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


# ---- normalisation --------------------------------------------------------------------


def softmax(x, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` with max-subtraction."""
    x = _as_tensor(x)
    _check_finite(x, "softmax")
    if not -x.ndim <= axis < max(x.ndim, 1):
        raise ContractError(f"softmax: axis {axis} invalid for shape {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def _bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), _bw)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    _check_finite(x, "log_softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def _bw(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make(out, (x,), _bw)


def layer_norm(x, gamma, beta, eps: float = 1e-12) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    n = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def _bw(g):
        gx = None
        if x.requires_grad:
            gh = g * gamma.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).sum(axis=-1, keepdims=True) / n)
        gg = _unbroadcast(g * xhat, gamma.shape) if gamma.requires_grad else None
        gb = _unbroadcast(g, beta.shape) if beta.requires_grad else None
        return gx, gg, gb

    return _make(out, (x, gamma, beta), _bw)


# ---- shape manipulation ---------------------------------------------------------------


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = tuple(_as_tensor(t) for t in tensors)
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {[t.shape for t in ts]}: {exc}") from None
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def _bw(g):
        parts = np.split(g, sizes, axis=axis)
        return tuple(p if t.requires_grad else None for p, t in zip(parts, ts))

    return _make(out, ts, _bw)


def reshape(x, shape: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes: tuple[int, ...] | None = None) -> Tensor:
    x = _as_tensor(x)
    if axes is None:
        axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def _index(x: Tensor, index) -> Tensor:
    out = x.data[index]

    def _bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(np.array(out, dtype=_DTYPE), (x,), _bw)


# ---- reductions -----------------------------------------------------------------------


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = _as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def _bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(out), (x,), _bw)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return div(sum(x, axis=axis, keepdims=keepdims), float(count))


# ---- lookups ----------------------------------------------------------------------------


def embedding(table, ids) -> Tensor:
    """Rows of ``table`` selected by integer ``ids`` (any shape)."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(f"embedding: ids outside [0, {table.shape[0]})")
    out = table.data[ids]

    def _bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (full,)

    return _make(out, (table,), _bw)


def dropout(x, rate: float, rng: "RngState | None") -> Tensor:
    """Inverted dropout; identity when ``rng`` is None or ``rate`` is 0."""
    x = _as_tensor(x)
    if rng is None or rate <= 0.0:
        return x
    keep = (rng.uniform(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(keep))


# ---- randomness -------------------------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _finalize(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _mix_seed(seed: int) -> int:
    return int(_finalize(np.array([(seed + 0x9E3779B97F4A7C15) & _MASK64], dtype=np.uint64))[0])


@dataclass
class RngState:
    """Counter-based splitmix64 stream.

    Draw ``i`` is a pure function of ``(seed, i)``; ``position`` counts the
    64-bit words consumed so far.
    """

    seed: int
    position: int = 0

    def __post_init__(self) -> None:
        self.seed = int(self.seed) & _MASK64
        self._key = np.uint64(_mix_seed(self.seed))

    def next_u64(self, n: int) -> np.ndarray:
        counters = np.arange(self.position + 1, self.position + 1 + n, dtype=np.uint64)
        with np.errstate(over="ignore"):
            words = _finalize(self._key + counters * _GOLDEN)
        self.position += n
        return words

    def uniform(self, shape) -> np.ndarray:
        """Uniform draws on [0, 1) with 53 random bits each."""
        shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
        n = int(np.prod(shape)) if shape else 1
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return u.reshape(shape)

    def normal(self, shape) -> np.ndarray:
        """Standard normal draws by Box-Muller over consecutive uniform pairs."""
        shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u = self.uniform((2 * m,))
        u1 = 1.0 - u[0::2]
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * m)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        return z[:n].reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform((n,)), kind="stable")

    def integers(self, low: int, high: int, shape) -> np.ndarray:
        u = self.uniform(shape)
        return (low + np.floor(u * (high - low))).astype(np.int64)

    def spawn(self, tag: int) -> "RngState":
        """Independent child stream keyed by ``tag``; does not advance self."""
        return RngState(_mix_seed(self.seed ^ ((int(tag) * 0xD1B54A32D192ED03) & _MASK64)))


def sample_standard_normal(rng: RngState, shape) -> Tensor:
    """Constant tensor of i.i.d. N(0, 1) draws; advances ``rng``."""
    return Tensor(rng.normal(tuple(shape)))


# ---- reverse pass ---------------------------------------------------------------------


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every grad-requiring leaf."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def gradient_check(f: Callable, x, step: float = 1e-5) -> float:
    """Max relative error between reverse-mode and finite-difference gradients.

    ``x`` is a Tensor or a sequence of Tensors; ``f`` is called with the same
    structure and must return a scalar Tensor.  The reference is the
    five-point central difference evaluated in extended precision, so its
    own error (~1e-15 absolute) sits far below the float64 gradients being
    checked.  Relative error per coordinate is ``|a - b| / max(|a|, |b|, 1e-8)``.
    """
    if step <= 0:
        raise ContractError("gradient_check: step must be positive")
    single = isinstance(x, Tensor)
    leaves = [x] if single else list(x)
    probes = [Tensor(t.data.copy(), requires_grad=True) for t in leaves]
    out = f(probes[0] if single else probes)
    backward(out)
    worst = 0.0
    stencil = ((2.0, -1.0), (1.0, 8.0), (-1.0, -8.0), (-2.0, 1.0))
    with no_grad(), extended_precision():
        bases = [np.asarray(t.data, dtype=np.longdouble) for t in leaves]
        # differences from f(x) vanish exactly when f ignores a coordinate
        base_args = [Tensor(b) for b in bases]
        f0 = f(base_args[0] if single else base_args).data.reshape(())
        for k, probe in enumerate(probes):
            analytic = probe.grad if probe.grad is not None else np.zeros_like(probe.data)
            flat = analytic.reshape(-1)
            for i in range(bases[k].size):
                acc = np.longdouble(0.0)
                for offset, weight in stencil:
                    pert = bases[k].copy().reshape(-1)
                    pert[i] += np.longdouble(offset * step)
                    args = [Tensor(b) for b in bases]
                    args[k] = Tensor(pert.reshape(bases[k].shape))
                    acc += weight * (f(args[0] if single else args).data.reshape(()) - f0)
                numeric = float(acc / np.longdouble(12.0 * step))
                a = float(flat[i])
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, err)
    return worst
