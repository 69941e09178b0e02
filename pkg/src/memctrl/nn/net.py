"""Sequential parameter container with tape-based reverse accumulation."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .layers import LSTM, Dense, ShapeError


class TapeMismatch(ValueError):
    pass


@dataclass
class Tape:
    """Forward record for one pass through a :class:`Network`."""
    owner: int
    caches: list = field(default_factory=list)
    states: list = field(default_factory=list)   # final (h, c) per LSTM layer


class Network:
    """Ordered list of layers with gradient and Adam moment buffers.

    Dense layers map the last axis; LSTM layers unroll over axis 0. Gradients
    accumulate across :meth:`backward` calls until :meth:`zero_grad`.
    """

    def __init__(self, layers):
        self.layers = list(layers)
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise ShapeError(f"layer output {a.n_out} does not feed layer input {b.n_in}")
        self.adam_m = [np.zeros_like(p) for _, p, _ in self.named_params()]
        self.adam_v = [np.zeros_like(p) for _, p, _ in self.named_params()]
        self.adam_t = 0

    @property
    def n_in(self):
        return self.layers[0].n_in

    @property
    def n_out(self):
        return self.layers[-1].n_out

    def named_params(self):
        out = []
        for j, layer in enumerate(self.layers):
            for name, p, g in layer.params():
                out.append((f"{j}.{name}", p, g))
        return out

    def params(self):
        return [p for _, p, _ in self.named_params()]

    def grads(self):
        return [g for _, _, g in self.named_params()]

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def zero_grad(self):
        for g in self.grads():
            g.fill(0.0)

    def forward(self, x, states=None):
        """Run all layers; ``states`` optionally seeds each LSTM layer."""
        tape = Tape(owner=id(self))
        y = x
        k = 0
        for layer in self.layers:
            if isinstance(layer, LSTM):
                st = states[k] if states is not None else None
                y, cache = layer.forward(y, st)
                tape.states.append(cache[1])
                k += 1
            else:
                y, cache = layer.forward(y)
            tape.caches.append(cache)
        return y, tape

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, tape: Tape, dy):
        """Accumulate parameter gradients and return d(loss)/d(input)."""
        if tape.owner != id(self) or len(tape.caches) != len(self.layers):
            raise TapeMismatch("tape was not produced by this network")
        d = dy
        for layer, cache in zip(reversed(self.layers), reversed(tape.caches)):
            d = layer.backward(cache, d)
        return d

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params():
            raise ShapeError(f"expected {self.n_params()} values, got {flat.size}")
        i = 0
        for p in self.params():
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    def load_params_from(self, other: "Network"):
        src = other.params()
        dst = self.params()
        if [p.shape for p in src] != [p.shape for p in dst]:
            raise ShapeError("parameter shapes differ")
        for d, s in zip(dst, src):
            d[...] = s

    def spec(self):
        return [layer.spec() for layer in self.layers]


def mlp(sizes, hidden_activation="relu", out_activation="linear", bias=True, rng=None):
    """Dense stack ``sizes[0] -> ... -> sizes[-1]``."""
    rng = rng if rng is not None else np.random.default_rng(0)
    layers = []
    for j, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        act = out_activation if j == len(sizes) - 2 else hidden_activation
        layers.append(Dense(a, b, act, bias=bias, rng=rng))
    return Network(layers)


class ParamSet:
    """Free-standing named arrays with the same optimizer interface as
    :class:`Network` (used for parameters that are not part of a layer)."""

    def __init__(self, **arrays):
        self._p = {k: np.array(v, dtype=float) for k, v in arrays.items()}
        self._g = {k: np.zeros_like(v) for k, v in self._p.items()}
        self.adam_m = [np.zeros_like(v) for v in self._p.values()]
        self.adam_v = [np.zeros_like(v) for v in self._p.values()]
        self.adam_t = 0

    def __getitem__(self, k):
        return self._p[k]

    def grad(self, k):
        return self._g[k]

    def named_params(self):
        return [(k, self._p[k], self._g[k]) for k in self._p]

    def params(self):
        return list(self._p.values())

    def grads(self):
        return list(self._g.values())

    def zero_grad(self):
        for g in self._g.values():
            g.fill(0.0)

    def copy(self):
        return copy.deepcopy(self)
