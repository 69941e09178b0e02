"""Discrete PI/PID feedback baseline and an exhaustive grid tuner."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import asdict, dataclass

from .harness import avg_tracking_error, run_episode


@dataclass(frozen=True)
class PidGains:
    kp: float = 1.0
    ki: float = 0.0
    kd: float = 0.0
    i_clamp: float = 200.0    # bound on |ki * integral| (kPa)

    def __post_init__(self):
        for name in ("kp", "ki", "kd"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not self.i_clamp > 0:
            raise ValueError("i_clamp must be > 0")

    def to_dict(self):
        return asdict(self)


@dataclass
class PidState:
    integral: float = 0.0
    prev_error: float | None = None


def pid_step(gains: PidGains, e_t: float, state: PidState, u_min=-math.inf, u_max=math.inf):
    """Positional PID on ``e = theta - theta_ref``.

    ``u = -(kp*e + ki*sum(e) + kd*(e - e_prev))``, clipped to the actuation
    range. The integral is clamped so that ``|ki * sum(e)| <= i_clamp``.
    Returns ``(u, new_state)``.
    """
    integral = state.integral + e_t
    if gains.ki != 0.0:
        lim = gains.i_clamp / abs(gains.ki)
        integral = min(max(integral, -lim), lim)
    de = 0.0 if state.prev_error is None else e_t - state.prev_error
    u = -(gains.kp * e_t + gains.ki * integral + gains.kd * de)
    u = min(max(u, u_min), u_max)
    return u, PidState(integral, e_t)


class PidController:
    uses_measurement = True

    def __init__(self, gains: PidGains, u_min=0.0, u_max=200.0, name="pi"):
        self.gains, self.u_min, self.u_max, self.name = gains, u_min, u_max, name
        self.reset()

    def reset(self):
        self.state = PidState()

    def act(self, obs):
        u, self.state = pid_step(self.gains, obs.theta - obs.ref, self.state,
                                 self.u_min, self.u_max)
        return u


@dataclass
class PidGrid:
    kp: tuple = (0.5, 1.0, 2.0, 4.0, 8.0)
    ki: tuple = (0.0, 0.05, 0.1, 0.2, 0.5)
    kd: tuple = (0.0,)
    i_clamp: float = 200.0

    def points(self):
        return [PidGains(kp, ki, kd, self.i_clamp)
                for kp, ki, kd in itertools.product(self.kp, self.ki, self.kd)]


class TuningFailure(RuntimeError):
    def __init__(self, message, rows):
        super().__init__(message)
        self.rows = rows


def tune_gains(plant_factory, ref, grid: PidGrid | None = None):
    """Evaluate every grid point and return ``(best_gains, rows)``.

    ``plant_factory()`` must return a fresh plant. Ties in average error go to
    the lexicographically smaller ``(kp, ki, kd)``.
    """
    grid = grid or PidGrid()
    rows = []
    for g in grid.points():
        plant = plant_factory()
        try:
            err = avg_tracking_error(run_episode(PidController(g, plant.u_min, plant.u_max),
                                                 plant, ref))
        except (ValueError, RuntimeError):
            err = math.nan
        rows.append((g, err))
    finite = [(err, (g.kp, g.ki, g.kd), g) for g, err in rows if math.isfinite(err)]
    if not finite:
        raise TuningFailure("no grid point produced a finite tracking error", rows)
    best = min(finite, key=lambda x: (x[0], x[1]))[2]
    return best, rows


def write_tuning_csv(path, rows, header=None):
    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(("kp", "ki", "kd", "i_clamp", "avg_error"))
        for g, err in rows:
            w.writerow((repr(g.kp), repr(g.ki), repr(g.kd), repr(g.i_clamp), repr(float(err))))
    return path

