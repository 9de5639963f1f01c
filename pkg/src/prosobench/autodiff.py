"""Minimal reverse-mode automatic differentiation on numpy arrays.

Tape-based: every operation records its parents and a backward closure on the
produced Tensor; `backward` topologically sorts the graph and accumulates
gradients into `.grad` slots. Everything runs in float64 so analytic
gradients can be checked against central finite differences tightly.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import ContractViolation


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "parents", "bwd", "requires_grad")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), bwd: Optional[Callable] = None):
        self.data = _as_array(data)
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self.bwd = bwd
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            # Copy: the incoming array may be shared with another consumer.
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-accumulate gradients from this scalar into all parents."""
        if self.data.size != 1:
            raise ContractViolation("backward() requires a scalar loss tensor")
        if not self.requires_grad:
            raise ContractViolation("backward() on a tensor with no recorded graph")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node.bwd is not None and node.grad is not None:
                node.bwd(node.grad)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def item(self) -> float:
        return float(self.data.reshape(()))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, rng: Optional[np.random.Generator] = None, scale: Optional[float] = None) -> Tensor:
    """Trainable tensor; `data` may be a shape tuple to initialize randomly."""
    if isinstance(data, tuple):
        if rng is None:
            raise ContractViolation("random parameter init needs an rng")
        fan_in = data[0] if len(data) > 1 else data[0]
        scale = scale if scale is not None else 1.0 / np.sqrt(max(fan_in, 1))
        data = rng.uniform(-scale, scale, size=data)
    return Tensor(data, requires_grad=True)


# -- primitive ops -------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))
    out.bwd = bwd
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data, parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))
    out.bwd = bwd
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data, parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))
    out.bwd = bwd
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data @ b.data, parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)
    out.bwd = bwd
    return out


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    out = Tensor(y, parents=(x,))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * (1.0 - y * y))
    out.bwd = bwd
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(y, parents=(x,))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * y * (1.0 - y))
    out.bwd = bwd
    return out


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0), parents=(x,))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * (x.data > 0))
    out.bwd = bwd
    return out


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    out = Tensor(y, parents=(x,))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * y)
    out.bwd = bwd
    return out


def log(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.log(x.data), parents=(x,))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g / x.data)
    out.bwd = bwd
    return out


def softplus(x) -> Tensor:
    """log(1 + e^x), computed stably."""
    x = as_tensor(x)
    y = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))
    out = Tensor(y, parents=(x,))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g / (1.0 + np.exp(-x.data)))
    out.bwd = bwd
    return out


def absolute(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.abs(x.data), parents=(x,))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * np.sign(x.data))
    out.bwd = bwd
    return out


def square(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data ** 2, parents=(x,))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * 2.0 * x.data)
    out.bwd = bwd
    return out


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims), parents=(x,))

    def bwd(g):
        if not x.requires_grad:
            return
        if axis is None:
            x._accumulate(np.broadcast_to(g, x.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        x._accumulate(np.broadcast_to(g, x.data.shape).copy())
    out.bwd = bwd
    return out


def tmean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else x.data.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.reshape(shape), parents=(x,))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.data.shape))
    out.bwd = bwd
    return out


def transpose(x, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    inverse = np.argsort(axes)
    out = Tensor(x.data.transpose(axes), parents=(x,))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g.transpose(inverse))
    out.bwd = bwd
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])
    out.bwd = bwd
    return out


def narrow(x, axis: int, start: int, length: int) -> Tensor:
    x = as_tensor(x)
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = Tensor(x.data[idx], parents=(x,))

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[idx] = g
            x._accumulate(full)
    out.bwd = bwd
    return out


def take_rows(x, indices) -> Tensor:
    """Gather rows of a 2-D tensor; scatter-add on the way back."""
    x = as_tensor(x)
    indices = np.asarray(indices, dtype=np.int64)
    out = Tensor(x.data[indices], parents=(x,))

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            np.add.at(full, indices, g)
            x._accumulate(full)
    out.bwd = bwd
    return out


def pad_axis(x, axis: int, before: int, after: int) -> Tensor:
    x = as_tensor(x)
    widths = [(0, 0)] * x.data.ndim
    widths[axis] = (before, after)
    out = Tensor(np.pad(x.data, widths), parents=(x,))
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(before, before + x.data.shape[axis])
    idx = tuple(idx)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g[idx])
    out.bwd = bwd
    return out


def stop_gradient(x) -> Tensor:
    """Pass values forward, block gradients backward."""
    x = as_tensor(x)
    return Tensor(x.data.copy())


def monotonic_attend(p: Tensor, alpha_prev: Tensor, lengths: np.ndarray) -> Tensor:
    """One step of soft monotonic attention with an absorbing final position.

    q[j] = a[j] + (1 - p[j-1]) * q[j-1]; alpha[j] = p[j] * q[j] except at the
    last in-length position, which absorbs all remaining mass (alpha = q).
    Probability mass only moves rightward, so the weights stay a distribution
    and the expected attended position never decreases.
    """
    p, alpha_prev = as_tensor(p), as_tensor(alpha_prev)
    pd, ad = p.data, alpha_prev.data
    if pd.shape != ad.shape:
        raise ContractViolation("p and alpha_prev must share shape (B, T)")
    batch, tmax = pd.shape
    lengths = np.asarray(lengths, dtype=np.int64)
    q = np.zeros_like(pd)
    alpha = np.zeros_like(pd)
    valid = np.arange(tmax)[None, :] < lengths[:, None]
    last = lengths - 1
    q[:, 0] = ad[:, 0]
    for j in range(1, tmax):
        q[:, j] = ad[:, j] + (1.0 - pd[:, j - 1]) * q[:, j - 1]
    alpha = pd * q
    alpha[np.arange(batch), last] = q[np.arange(batch), last]
    alpha *= valid
    out = Tensor(alpha, parents=(p, alpha_prev))

    def bwd(g):
        gq = np.zeros_like(q)
        gp = np.zeros_like(pd)
        ga = np.zeros_like(ad)
        g = g * valid
        interior = valid.copy()
        interior[np.arange(batch), last] = False
        gq += np.where(interior, g * pd, 0.0)
        gp += np.where(interior, g * q, 0.0)
        gq[np.arange(batch), last] += g[np.arange(batch), last]
        for j in range(tmax - 1, 0, -1):
            ga[:, j] += gq[:, j]
            gq[:, j - 1] += (1.0 - pd[:, j - 1]) * gq[:, j]
            gp[:, j - 1] -= q[:, j - 1] * gq[:, j]
        ga[:, 0] += gq[:, 0]
        if p.requires_grad:
            p._accumulate(gp)
        if alpha_prev.requires_grad:
            alpha_prev._accumulate(ga)
    out.bwd = bwd
    return out


# -- optimizer ------------------------------------------------------------

class Adam:
    """Adaptive-moment gradient descent with global grad-norm clipping."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 clip_norm: Optional[float] = 5.0):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in self.params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in self.params.items()}

    def grad_norm(self) -> float:
        total = 0.0
        for t in self.params.values():
            if t.grad is not None:
                total += float(np.sum(t.grad ** 2))
        return float(np.sqrt(total))

    def step(self) -> float:
        """Apply one update; returns the pre-clip gradient norm."""
        norm = self.grad_norm()
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / (norm + 1e-12)
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for k, t in self.params.items():
            g = (t.grad if t.grad is not None else np.zeros_like(t.data)) * scale
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / b1c
            v_hat = self.v[k] / b2c
            t.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return norm

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def state_dict(self) -> dict:
        return {"step": self.step_count,
                "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}

    def load_state_dict(self, state: dict) -> None:
        self.step_count = state["step"]
        for k in self.m:
            self.m[k] = state["m"][k].copy()
            self.v[k] = state["v"][k].copy()


# -- gradient checking ------------------------------------------------------

def gradient_check(loss_fn: Callable[[], Tensor], params: dict[str, Tensor],
                   step: float = 1e-5, max_entries: Optional[int] = None,
                   rng: Optional[np.random.Generator] = None) -> float:
    """Max relative error of analytic vs central-difference gradients.

    `loss_fn` must rebuild the forward graph from the live parameter tensors
    on every call. When `max_entries` is set, a seeded subset of entries per
    parameter is probed instead of every element.
    """
    if not params:
        raise ContractViolation("gradient_check needs at least one parameter")
    for t in params.values():
        t.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for k, t in params.items()}
    worst = 0.0
    for name, t in params.items():
        t.data = np.asarray(t.data, dtype=np.float64)
        n = t.data.size
        if max_entries is not None and n > max_entries:
            picker = rng or np.random.default_rng(0)
            entries = picker.choice(n, size=max_entries, replace=False)
        else:
            entries = range(n)
        for i in entries:
            original = t.data.flat[i]
            t.data.flat[i] = original + step
            up = loss_fn().item()
            t.data.flat[i] = original - step
            down = loss_fn().item()
            t.data.flat[i] = original
            numeric = (up - down) / (2.0 * step)
            a = analytic[name].flat[i]
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
