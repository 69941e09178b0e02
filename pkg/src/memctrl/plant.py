"""Surrogate model of a single-chamber pneumatic soft finger.

The finger is reduced to its tip angle ``theta`` (degrees). Pressure is mapped
to a static bending angle by a saturating curve and the angle follows it with
a first-order lag::

    theta[t+1] = theta[t] + alpha * (g(u[t]) - theta[t])
    g(u)       = theta_max * tanh(u / u_scale)

``u`` is clamped to ``[u_min, u_max]`` before use. Optional Gaussian noise is
added to the returned angle, followed by a second clamp to ``+-theta_max``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np


class PlantConfigError(ValueError):
    """Raised when a plant configuration violates one of its bounds."""


class PlantInputError(ValueError):
    """Raised for a non-finite actuation value."""


@dataclass(frozen=True)
class PlantConfig:
    alpha: float = 0.1
    theta_max: float = 90.0
    u_scale: float = 60.0
    u_min: float = 0.0
    u_max: float = 200.0
    noise_std: float = 0.0
    seed: int = 0

    def validate(self) -> "PlantConfig":
        if not 0.0 < self.alpha <= 1.0:
            raise PlantConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.theta_max > 0.0:
            raise PlantConfigError(f"theta_max must be > 0, got {self.theta_max}")
        if not self.u_scale > 0.0:
            raise PlantConfigError(f"u_scale must be > 0, got {self.u_scale}")
        if not self.u_min < self.u_max:
            raise PlantConfigError(
                f"u_min must be < u_max, got u_min={self.u_min}, u_max={self.u_max}")
        if not self.noise_std >= 0.0:
            raise PlantConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PlantState:
    theta: float
    t: int


@dataclass(frozen=True)
class Actuation:
    u: float


def _as_float(u) -> float:
    if isinstance(u, Actuation):
        u = u.u
    u = float(u)
    if not math.isfinite(u):
        raise PlantInputError(f"actuation must be finite, got {u}")
    return u


class SoftFingerPlant:
    """Stateful surrogate finger.

    The instance owns its RNG, so two plants built from the same config
    produce identical traces for identical inputs.
    """

    def __init__(self, config: PlantConfig | None = None):
        self.config = (config or PlantConfig()).validate()
        self.state = PlantState(0.0, 0)
        self._theta = 0.0
        self._rng = np.random.default_rng(self.config.seed)

    # bounds used by controllers
    @property
    def u_min(self) -> float:
        return self.config.u_min

    @property
    def u_max(self) -> float:
        return self.config.u_max

    @property
    def theta_max(self) -> float:
        return self.config.theta_max

    def clamp(self, u: float) -> float:
        return min(max(u, self.config.u_min), self.config.u_max)

    def gain(self, u: float) -> float:
        """Static pressure-to-angle map for an already clamped input."""
        c = self.config
        return c.theta_max * math.tanh(u / c.u_scale)

    def steady_state(self, u) -> float:
        return self.gain(self.clamp(_as_float(u)))

    def reset(self) -> PlantState:
        self._rng = np.random.default_rng(self.config.seed)
        self._theta = 0.0
        self.state = PlantState(0.0, 0)
        return self.state

    def step(self, u) -> PlantState:
        u = self.clamp(_as_float(u))
        c = self.config
        th = self._theta + c.alpha * (self.gain(u) - self._theta)
        th = min(max(th, -c.theta_max), c.theta_max)
        self._theta = th
        obs = th
        if c.noise_std > 0.0:
            obs = th + c.noise_std * self._rng.standard_normal()
            obs = min(max(obs, -c.theta_max), c.theta_max)
        self.state = PlantState(float(obs), self.state.t + 1)
        return self.state

    def perturb(self, delta_theta: float) -> PlantState:
        """Shift the true angle by ``delta_theta`` (external disturbance)."""
        c = self.config
        self._theta = min(max(self._theta + delta_theta, -c.theta_max), c.theta_max)
        self.state = PlantState(self._theta, self.state.t)
        return self.state

    @property
    def theta(self) -> float:
        return self.state.theta


class LinearLagPlant(SoftFingerPlant):
    """Same lag dynamics with a linear gain ``g(u) = u * theta_max / u_max``.

    Used as an easy-to-invert variant when testing the inverse model.
    """

    def gain(self, u: float) -> float:
        c = self.config
        return u * c.theta_max / c.u_max


def reset(config: PlantConfig) -> PlantState:
    config.validate()
    return PlantState(0.0, 0)


def step(state: PlantState, u, config: PlantConfig, rng: np.random.Generator | None = None
         ) -> PlantState:
    """Functional form of one noiseless (or ``rng``-noised) plant step."""
    config.validate()
    u = min(max(_as_float(u), config.u_min), config.u_max)
    g = config.theta_max * math.tanh(u / config.u_scale)
    th = state.theta + config.alpha * (g - state.theta)
    if config.noise_std > 0.0 and rng is not None:
        th += config.noise_std * rng.standard_normal()
    th = min(max(th, -config.theta_max), config.theta_max)
    return PlantState(float(th), state.t + 1)


def steady_state(u, config: PlantConfig) -> float:
    config.validate()
    u = min(max(_as_float(u), config.u_min), config.u_max)
    return config.theta_max * math.tanh(u / config.u_scale)


def inverse_steady_state(theta: float, config: PlantConfig) -> float:
    """Pressure whose steady state is ``theta`` (clipped to the reachable range)."""
    x = min(max(theta / config.theta_max, -1 + 1e-12), 1 - 1e-12)
    u = config.u_scale * math.atanh(x)
    return min(max(u, config.u_min), config.u_max)
