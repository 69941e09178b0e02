"""Finite memory controller: a ring of past tracking errors and a weighted sum.

The controller is incremental. Each step it emits
``a_t = out_scale * act(sum_i w_i * e_{t-i})`` and the actuation is updated
as ``u_t = clip(u_{t-1} + a_t)``, starting from ``u = 0``. There is no bias
term, so zero error leaves the actuation unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn.layers import ShapeError, activate

FMC_ACTIVATIONS = ("tanh", "sigmoid", "linear")


class ErrorHistory:
    """Fixed-capacity error buffer, newest first: ``[e_t, e_{t-1}, ..., e_{t-k}]``."""

    def __init__(self, k: int = 4):
        if k < 0:
            raise ValueError("memory depth k must be >= 0")
        self.k = int(k)
        self._buf = np.zeros(self.k + 1)

    def __len__(self):
        return self.k + 1

    def __getitem__(self, i):
        return self._buf[i]

    def push(self, e_t: float) -> "ErrorHistory":
        e_t = float(e_t)
        if not math.isfinite(e_t):
            raise ValueError(f"tracking error must be finite, got {e_t}")
        self._buf[1:] = self._buf[:-1]
        self._buf[0] = e_t
        return self

    def state_vector(self) -> np.ndarray:
        return self._buf.copy()

    def clear(self):
        self._buf.fill(0.0)

    def copy(self) -> "ErrorHistory":
        h = ErrorHistory(self.k)
        h._buf[:] = self._buf
        return h


def push_error(h: ErrorHistory, e_t: float) -> ErrorHistory:
    """Return a new history with ``e_t`` pushed; ``h`` is not modified."""
    return h.copy().push(e_t)


def state_vector(h: ErrorHistory) -> np.ndarray:
    return h.state_vector()


@dataclass
class FmcWeights:
    """Weights in kPa per degree of error, newest error first."""
    w: np.ndarray
    out_activation: str = "tanh"
    out_scale: float = 5.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float).ravel()
        if self.out_activation not in FMC_ACTIVATIONS:
            raise ValueError(f"out_activation must be one of {FMC_ACTIVATIONS}")
        if not self.out_scale > 0:
            raise ValueError("out_scale must be > 0")

    @property
    def k(self) -> int:
        return self.w.size - 1

    def to_dict(self) -> dict:
        return {"k": self.k, "w": self.w.tolist(), "out_activation": self.out_activation,
                "out_scale": self.out_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "FmcWeights":
        w = np.asarray(d["w"], dtype=float)
        if w.size != int(d["k"]) + 1:
            raise ValueError(f"expected {int(d['k']) + 1} weights, got {w.size}")
        return cls(w, d["out_activation"], float(d["out_scale"]))


def preactivation(wts: FmcWeights, h) -> float:
    s = h.state_vector() if isinstance(h, ErrorHistory) else np.asarray(h, dtype=float)
    if s.shape != wts.w.shape:
        raise ShapeError(f"history of length {s.size} does not match {wts.w.size} weights")
    return float(wts.w @ s)


def fmc_action(wts: FmcWeights, h) -> float:
    """Actuation increment for the current history (kPa)."""
    return wts.out_scale * float(activate(wts.out_activation, np.float64(preactivation(wts, h))))


def apply_increment(u_prev: float, a_t: float, clamp=(0.0, 200.0)) -> float:
    lo, hi = clamp
    return min(max(u_prev + a_t, lo), hi)


class FmcController:
    """Closed-loop FMC for the episode harness."""

    uses_measurement = True

    def __init__(self, weights: FmcWeights, u_min=0.0, u_max=200.0, name="fmc"):
        self.weights = weights
        self.u_min, self.u_max = u_min, u_max
        self.name = name
        self.reset()

    def reset(self):
        self.history = ErrorHistory(self.weights.k)
        self.u = 0.0

    def act(self, obs) -> float:
        self.history.push(obs.theta - obs.ref)
        a = fmc_action(self.weights, self.history)
        self.u = apply_increment(self.u, a, (self.u_min, self.u_max))
        return self.u
