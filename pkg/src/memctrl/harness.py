"""Reference trajectories, episode execution, tracking metrics and reports."""
from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .rl.common import reward, write_trainlog_csv

TRACE_COLUMNS = ("t", "theta", "theta_ref", "error", "u", "reward")

STEP_LEVELS = (10.0, 40.0, 25.0, 60.0)


@dataclass
class ReferenceTrajectory:
    values: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def __len__(self):
        return self.values.size

    def __getitem__(self, i):
        return self.values[i]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def N(self):
        return self.values.size - 1


def _steps(N, levels, ramp_len, start):
    levels = [float(x) for x in levels]
    seg = N / len(levels)
    out = np.empty(N + 1)
    for i in range(N + 1):
        j = min(int(i // seg), len(levels) - 1)
        prev = start if j == 0 else levels[j - 1]
        if ramp_len > 0:
            x = min((i - j * seg) / ramp_len, 1.0)
            # raised-cosine blend from the previous plateau
            out[i] = prev + (levels[j] - prev) * 0.5 * (1.0 - math.cos(math.pi * x))
        else:
            out[i] = levels[j]
    return out


def _sine(N, offset, amp, freq, phase):
    t = np.arange(N + 1)
    return offset + amp * np.sin(2.0 * np.pi * freq * t + phase)


def make_reference(kind="steps", params=None, N=400, theta_max=90.0) -> ReferenceTrajectory:
    """Deterministic reference of length ``N + 1`` (degrees).

    ``steps``: plateaus ``levels`` each held ``N / len(levels)`` steps, entered
    from the previous level (``start`` for the first) over ``ramp_len`` steps
    with a raised-cosine blend; ``ramp_len=0`` gives hard steps.
    ``sine``: ``offset + amp * sin(2 pi freq t + phase)``.
    ``mixed``: a steps profile plus a sine ripple (``ripple_amp``, ``freq``).
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    p = dict(params or {})
    if kind == "steps":
        p = {"levels": STEP_LEVELS, "ramp_len": 20, "start": 0.0, **p}
        vals = _steps(N, p["levels"], float(p["ramp_len"]), float(p["start"]))
    elif kind == "sine":
        p = {"offset": 30.0, "amp": 20.0, "freq": 1.0 / 200.0, "phase": 0.0, **p}
        vals = _sine(N, p["offset"], p["amp"], p["freq"], p["phase"])
    elif kind == "mixed":
        p = {"levels": (20.0, 50.0, 35.0), "ramp_len": 30, "start": 0.0,
             "ripple_amp": 5.0, "freq": 1.0 / 60.0, **p}
        vals = _steps(N, p["levels"], float(p["ramp_len"]), float(p["start"]))
        vals = vals + p["ripple_amp"] * np.sin(2.0 * np.pi * p["freq"] * np.arange(N + 1))
    else:
        raise ValueError(f"unknown reference kind {kind!r}")
    if np.any(np.abs(vals) > theta_max):
        raise ValueError(f"reference leaves [-{theta_max}, {theta_max}] degrees")
    if "levels" in p:
        p["levels"] = list(p["levels"])
    return ReferenceTrajectory(vals, kind, p)


TRAIN_SINE = {"offset": 25.0, "amp": 25.0, "freq": 1.0 / 100.0, "phase": -math.pi / 2}


# train on a sine starting at rest, test on plateaus: different shape and frequency
def default_train_reference(N=400, theta_max=90.0):
    return make_reference("sine", TRAIN_SINE, N, theta_max)


def default_test_reference(N=400, theta_max=90.0):
    return make_reference("steps", None, N, theta_max)


@dataclass(frozen=True)
class Observation:
    """What a controller may see at step t. ``theta`` is ``None`` for
    controllers that do not use measurements."""
    t: int
    theta: float | None
    ref: float
    ref_next: float


class ZeroController:
    uses_measurement = False
    name = "zero"

    def reset(self):
        pass

    def act(self, obs):
        return 0.0


class ReplayController:
    """Plays back a fixed actuation sequence."""
    uses_measurement = False
    name = "replay"

    def __init__(self, u):
        self.u = np.asarray(u, dtype=float)

    def reset(self):
        pass

    def act(self, obs):
        return float(self.u[obs.t])


@dataclass
class EpisodeTrace:
    t: np.ndarray
    theta: np.ndarray
    theta_ref: np.ndarray
    error: np.ndarray
    u: np.ndarray
    reward: np.ndarray
    aborted: bool = False

    def __len__(self):
        return self.t.size

    def columns(self):
        return [getattr(self, c) for c in TRACE_COLUMNS]


class EpisodeAborted(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


def _trace(rows, aborted=False):
    arr = np.array(rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))
    return EpisodeTrace(arr[:, 0].astype(int), *(arr[:, j].copy() for j in range(1, 6)),
                        aborted=aborted)


def run_episode(controller, plant, ref, disturbance=None, reward_scale=1000.0) -> EpisodeTrace:
    """Run one episode over every reference point ``t = 0..N``.

    At step t the controller observes ``theta_t`` (only if it uses
    measurements), ``ref_t`` and ``ref_{t+1}``; its output ``u_t`` drives the
    plant to ``theta_{t+1}``. ``disturbance`` maps a step index to an angle
    offset added to the plant just before that step is observed.
    """
    ref = np.asarray(ref, dtype=float)
    disturbance = disturbance or {}
    plant.reset()
    controller.reset()
    N = ref.size - 1
    rows = []
    for t in range(N + 1):
        if t in disturbance:
            plant.perturb(disturbance[t])
        theta = plant.theta
        obs = Observation(t, theta if controller.uses_measurement else None,
                          float(ref[t]), float(ref[min(t + 1, N)]))
        u = controller.act(obs)
        e = theta - ref[t]
        r = reward(theta, ref[t], reward_scale, plant.theta_max)
        if not math.isfinite(u):
            raise EpisodeAborted(f"controller output is not finite at t={t}", _trace(rows, True))
        rows.append((t, theta, ref[t], e, u, r))
        if t < N:
            plant.step(u)
    return _trace(rows)


def avg_tracking_error(trace) -> float:
    """``(1/(N+1)) * sum_t |e_t|`` over every recorded step."""
    e = trace.error if isinstance(trace, EpisodeTrace) else np.asarray(trace, dtype=float)
    if e.size == 0:
        raise ValueError("empty trace")
    return float(np.mean(np.abs(e)))


def max_tracking_error(trace) -> float:
    e = trace.error if isinstance(trace, EpisodeTrace) else np.asarray(trace, dtype=float)
    if e.size == 0:
        raise ValueError("empty trace")
    return float(np.max(np.abs(e)))


def write_trace_csv(path, trace: EpisodeTrace, header: dict | None = None):
    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in zip(*trace.columns()):
            w.writerow([int(row[0])] + [repr(float(x)) for x in row[1:]])
    return path


def read_trace_csv(path) -> EpisodeTrace:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if tuple(rows[0]) != TRACE_COLUMNS:
        raise ValueError(f"unexpected trace columns {rows[0]}")
    return _trace([[float(x) for x in r] for r in rows[1:]])


def episodes_to_plateau(mean_rewards, frac=0.9, smooth=5, tail=10) -> int:
    """Episodes a reward curve needs to settle within ``frac`` of its plateau.

    The curve is smoothed with a trailing mean over ``smooth`` episodes; the
    plateau is the mean of the last ``tail`` raw values. The result is the
    1-based episode after which the smoothed curve stays at or above
    ``start + frac * (plateau - start)``, with ``start`` the first episode's
    value. A curve whose plateau is not above its start counts as settled at
    episode 1.
    """
    r = np.asarray(mean_rewards, dtype=float)
    if r.size == 0:
        raise ValueError("empty reward curve")
    if not np.all(np.isfinite(r)):
        raise ValueError("reward curve has non-finite entries")
    c = np.cumsum(np.insert(r, 0, 0.0))
    idx = np.arange(1, r.size + 1)
    lo = np.maximum(idx - smooth, 0)
    sm = (c[idx] - c[lo]) / (idx - lo)
    start = r[0]
    plateau = float(np.mean(r[-min(tail, r.size):]))
    if plateau <= start:
        return 1
    thr = start + frac * (plateau - start)
    below = np.nonzero(sm < thr)[0]
    return 1 if below.size == 0 else int(below[-1]) + 2


@dataclass
class ComparisonReport:
    rows: list            # (name, avg_error, max_error), in input order
    ranking: list         # names, best (lowest average error) first
    files: dict = field(default_factory=dict)

    def error_of(self, name):
        for n, avg, _ in self.rows:
            if n == name:
                return avg
        raise KeyError(name)


def _slug(name):
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def compare_report(runs, out_dir=None, header: dict | None = None) -> ComparisonReport:
    """Tabulate ``(name, trace, log_or_None)`` runs and rank them.

    With ``out_dir`` set, writes ``table.csv`` (avg/max error and rank per
    controller), ``rewards_<name>.csv`` for every run that has a training
    log, and ``ranking.txt``. Ties in average error keep input order.
    """
    runs = list(runs)
    if not runs:
        raise ValueError("compare_report needs at least one run")
    rows = [(name, avg_tracking_error(tr), max_tracking_error(tr)) for name, tr, _ in runs]
    order = sorted(range(len(rows)), key=lambda i: (rows[i][1], i))
    ranking = [rows[i][0] for i in order]
    report = ComparisonReport(rows, ranking)
    if out_dir is None:
        return report
    os.makedirs(out_dir, exist_ok=True)
    rank = {name: j + 1 for j, name in enumerate(ranking)}
    path = os.path.join(out_dir, "table.csv")
    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(("controller", "avg_error", "max_error", "rank"))
        for name, avg, mx in rows:
            w.writerow((name, repr(avg), repr(mx), rank[name]))
    report.files["table"] = path
    for name, _, log in runs:
        if log is not None:
            p = os.path.join(out_dir, f"rewards_{_slug(name)}.csv")
            write_trainlog_csv(p, log, header)
            report.files[f"rewards:{name}"] = p
    path = os.path.join(out_dir, "ranking.txt")
    with open(path, "w") as fh:
        fh.write(" < ".join(ranking) + "\n")
    report.files["ranking"] = path
    return report
