"""Dense and LSTM layers with explicit forward caches and backward passes.

Arrays are batch-first. A dense layer acts on the last axis, so it accepts
``(in,)``, ``(B, in)`` or ``(T, B, in)`` inputs. An LSTM layer consumes a
sequence ``(T, B, in)``.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


def _sigmoid(z):
    # tanh form is overflow-free
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _relu(z):
    return np.maximum(z, 0.0)


def _linear(z):
    return z


ACTIVATIONS = {
    "tanh": np.tanh,
    "sigmoid": _sigmoid,
    "relu": _relu,
    "linear": _linear,
}


def activate(name: str, z):
    try:
        return ACTIVATIONS[name](z)
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None


def activation_grad(name: str, z, y):
    """d(activation)/dz given pre-activation z and output y."""
    if name == "tanh":
        return 1.0 - y * y
    if name == "sigmoid":
        return y * (1.0 - y)
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


def uniform_init(rng, shape, fan_in):
    lim = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-lim, lim, size=shape)


class Dense:
    """``y = activation(x @ W.T + b)`` with ``W`` of shape (out, in)."""

    kind = "dense"

    def __init__(self, n_in: int, n_out: int, activation: str = "linear", bias: bool = True,
                 rng: np.random.Generator | None = None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.n_out = int(n_in), int(n_out)
        self.activation = activation
        self.W = uniform_init(rng, (self.n_out, self.n_in), self.n_in)
        self.dW = np.zeros_like(self.W)
        self.bias = bool(bias)
        if self.bias:
            self.b = np.zeros(self.n_out)
            self.db = np.zeros(self.n_out)

    def params(self):
        out = [("W", self.W, self.dW)]
        if self.bias:
            out.append(("b", self.b, self.db))
        return out

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"dense layer expects last dim {self.n_in}, got shape {x.shape}")
        z = x @ self.W.T
        if self.bias:
            z = z + self.b
        y = activate(self.activation, z)
        return y, (x, z, y)

    def backward(self, cache, dy):
        x, z, y = cache
        dy = np.asarray(dy, dtype=float)
        if dy.shape != y.shape:
            raise ShapeError(f"gradient shape {dy.shape} does not match output {y.shape}")
        dz = dy * activation_grad(self.activation, z, y) if self.activation != "linear" else dy
        dz2 = dz.reshape(-1, self.n_out)
        self.dW += dz2.T @ x.reshape(-1, self.n_in)
        if self.bias:
            self.db += dz2.sum(axis=0)
        return dz @ self.W

    def spec(self) -> dict:
        return {"type": "dense", "in": self.n_in, "out": self.n_out,
                "activation": self.activation, "bias": self.bias}


class LSTM:
    """Single LSTM layer.

    Gates are stacked in the order input, forget, output, candidate in one
    matrix ``W`` of shape (4H, in + H) acting on ``[x_t, h_{t-1}]``::

        i, f, o = sigmoid(.), g = tanh(.)
        c_t = f * c_{t-1} + i * g
        h_t = o * tanh(c_t)
    """

    kind = "lstm"
    GATES = ("i", "f", "o", "g")

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator | None = None,
                 forget_bias: float = 1.0):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.hidden = int(n_in), int(hidden)
        cols = self.n_in + self.hidden
        self.W = uniform_init(rng, (4 * self.hidden, cols), cols)
        self.b = np.zeros(4 * self.hidden)
        self.b[self.hidden:2 * self.hidden] = forget_bias
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    @property
    def n_out(self):
        return self.hidden

    def params(self):
        return [("W", self.W, self.dW), ("b", self.b, self.db)]

    def gate(self, name: str):
        """(W, b) views for one gate."""
        j = self.GATES.index(name)
        s = slice(j * self.hidden, (j + 1) * self.hidden)
        return self.W[s], self.b[s]

    def zero_state(self, batch: int | None = None):
        shape = (self.hidden,) if batch is None else (batch, self.hidden)
        return np.zeros(shape), np.zeros(shape)

    def step(self, x, h_prev, c_prev):
        """One cell update. Works for a single vector or a (B, .) batch."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"LSTM expects input dim {self.n_in}, got shape {x.shape}")
        if h_prev.shape[-1] != self.hidden or c_prev.shape[-1] != self.hidden:
            raise ShapeError("LSTM state dimension mismatch")
        H = self.hidden
        xh = np.concatenate([x, h_prev], axis=-1)
        a = xh @ self.W.T + self.b
        sg = _sigmoid(a[..., :3 * H])
        i, f, o = sg[..., :H], sg[..., H:2 * H], sg[..., 2 * H:]
        g = np.tanh(a[..., 3 * H:])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        return h, c, (xh, i, f, o, g, c_prev, tc)

    def step_backward(self, cache, dh, dc):
        xh, i, f, o, g, c_prev, tc = cache
        H = self.hidden
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_prev = dc * f
        da = np.concatenate([di * i * (1 - i), df * f * (1 - f), do * o * (1 - o),
                             dg * (1 - g * g)], axis=-1)
        self.dW += da.reshape(-1, 4 * H).T @ xh.reshape(-1, xh.shape[-1])
        self.db += da.reshape(-1, 4 * H).sum(axis=0)
        dxh = da @ self.W
        return dxh[..., :self.n_in], dxh[..., self.n_in:], dc_prev

    def forward(self, xs, state=None):
        """Unroll over ``xs`` of shape (T, B, in) or (T, in)."""
        xs = np.asarray(xs, dtype=float)
        if xs.ndim < 2 or xs.shape[-1] != self.n_in:
            raise ShapeError(f"LSTM expects (T, ..., {self.n_in}) input, got {xs.shape}")
        batch = xs.shape[1] if xs.ndim == 3 else None
        h, c = state if state is not None else self.zero_state(batch)
        hs = np.empty(xs.shape[:-1] + (self.hidden,))
        caches = []
        for t in range(xs.shape[0]):
            h, c, cache = self.step(xs[t], h, c)
            hs[t] = h
            caches.append(cache)
        return hs, (caches, (h, c))

    def backward(self, cache, dhs, dstate=None):
        caches, _ = cache
        dhs = np.asarray(dhs, dtype=float)
        T = len(caches)
        if dhs.shape[0] != T:
            raise ShapeError("sequence gradient length does not match the forward pass")
        if dstate is None:
            dh = np.zeros_like(dhs[0])
            dc = np.zeros_like(dhs[0])
        else:
            dh, dc = dstate
        dxs = np.empty(dhs.shape[:-1] + (self.n_in,))
        for t in range(T - 1, -1, -1):
            dx, dh, dc = self.step_backward(caches[t], dhs[t] + dh, dc)
            dxs[t] = dx
        self.last_dstate = (dh, dc)
        return dxs

    def spec(self) -> dict:
        return {"type": "lstm", "in": self.n_in, "hidden": self.hidden}
