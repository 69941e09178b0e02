"""LSTM inverse model and the open-/closed-loop trackers built on it.

The inverse model reads a configuration pair ``(p_t, p_{t+1})`` per step,
carries its LSTM state along a trajectory, and emits the actuation ``u_t``
that moves the plant between them.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .nn import LSTM, Adam, Dense, Network, TrainingError, network_from_dict, network_to_dict

log = logging.getLogger(__name__)


@dataclass
class ExcitationConfig:
    """Random pressure program of steps, ramps and sines.

    Levels are drawn as ``u_min + (u_max - u_min) * U**level_power`` so low
    pressures, where the finger is most sensitive, are sampled densely.
    """
    seed: int = 0
    min_seg: int = 15
    max_seg: int = 70
    p_step: float = 0.5
    p_ramp: float = 0.3
    sine_periods: tuple = (17.0, 37.0, 73.0)
    level_power: float = 2.0
    margin: float = 0.0     # >0 lets levels overshoot the clamp range (then clamped)


@dataclass
class LstmConfig:
    dataset_size: int = 20_000
    hidden: int = 32
    layers: int = 1
    epochs: int = 200
    lr: float = 1e-2
    lr_final: float = 1e-4    # cosine decay target
    window: int = 50
    batch: int = 16
    val_frac: float = 0.1
    seed: int = 0

    def validate(self):
        if self.dataset_size < 2:
            raise ValueError("dataset_size must be >= 2")
        if self.hidden < 1 or self.layers < 1 or self.window < 1 or self.batch < 1:
            raise ValueError("hidden, layers, window and batch must be positive")
        if self.epochs < 0 or not self.lr > 0:
            raise ValueError("epochs must be >= 0 and lr > 0")
        if not 0.0 <= self.val_frac < 1.0:
            raise ValueError("val_frac must lie in [0, 1)")
        return self

    def train_kwargs(self):
        return dict(epochs=self.epochs, lr=self.lr, lr_final=self.lr_final,
                    hidden=self.hidden, layers=self.layers, window=self.window,
                    batch=self.batch, val_frac=self.val_frac, seed=self.seed)


@dataclass
class InverseDataset:
    """``u[i]`` moved the plant from ``p[i]`` to ``p[i + 1]``."""
    p: np.ndarray   # (M + 1,)
    u: np.ndarray   # (M,)
    n_clamped: int = 0
    norm: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.p.size != self.u.size + 1:
            raise ValueError("p must have exactly one more sample than u")
        if not self.norm:
            self.norm = Normalizer.fit(self.p, self.u).to_dict()

    def __len__(self):
        return self.u.size

    @property
    def p_t(self):
        return self.p[:-1]

    @property
    def p_next(self):
        return self.p[1:]

    def to_csv(self, path, header=None):
        with open(path, "w", newline="") as fh:
            for k, v in (header or {}).items():
                fh.write(f"# {k}={v}\n")
            w = csv.writer(fh)
            w.writerow(("t", "u", "p"))
            for t in range(self.u.size):
                w.writerow((t, repr(float(self.u[t])), repr(float(self.p[t]))))
            w.writerow((self.u.size, "", repr(float(self.p[-1]))))
        return path

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            rows = list(csv.reader(ln for ln in fh if not ln.startswith("#")))
        if tuple(rows[0]) != ("t", "u", "p"):
            raise ValueError(f"unexpected dataset columns {rows[0]}")
        body = rows[1:]
        u = [float(r[1]) for r in body[:-1]]
        p = [float(r[2]) for r in body]
        return cls(np.array(p), np.array(u))


@dataclass
class Normalizer:
    """Affine map of each channel's [lo, hi] onto [-1, 1]."""
    p_lo: float
    p_hi: float
    u_lo: float
    u_hi: float

    @classmethod
    def fit(cls, p, u):
        def span(x):
            lo, hi = float(np.min(x)), float(np.max(x))
            return (lo, hi) if hi > lo else (lo - 1.0, hi + 1.0)
        return cls(*span(p), *span(u))

    @staticmethod
    def _fwd(x, lo, hi):
        return 2.0 * (np.asarray(x, dtype=float) - lo) / (hi - lo) - 1.0

    @staticmethod
    def _inv(z, lo, hi):
        return lo + (np.asarray(z, dtype=float) + 1.0) * 0.5 * (hi - lo)

    def p_norm(self, p):
        return self._fwd(p, self.p_lo, self.p_hi)

    def u_norm(self, u):
        return self._fwd(u, self.u_lo, self.u_hi)

    def u_denorm(self, z):
        return self._inv(z, self.u_lo, self.u_hi)

    def p_denorm(self, z):
        return self._inv(z, self.p_lo, self.p_hi)

    def to_dict(self):
        return asdict(self)


def excitation_signal(M, u_min, u_max, cfg: ExcitationConfig):
    """Pressure program of length ``M`` and the number of clamped samples."""
    rng = np.random.default_rng(cfg.seed)
    span = u_max - u_min

    def level():
        x = rng.uniform(-cfg.margin, 1.0 + cfg.margin)
        return u_min + span * math.copysign(abs(x) ** cfg.level_power, x)

    out = np.empty(M)
    i = 0
    cur = level()
    while i < M:
        n = int(rng.integers(cfg.min_seg, cfg.max_seg + 1))
        n = min(n, M - i)
        kind = rng.uniform()
        if kind < cfg.p_step:
            cur = level()
            seg = np.full(n, cur)
        elif kind < cfg.p_step + cfg.p_ramp:
            nxt = level()
            seg = np.linspace(cur, nxt, n)
            cur = nxt
        else:
            period = cfg.sine_periods[int(rng.integers(len(cfg.sine_periods)))]
            amp = 0.5 * abs(level() - u_min)
            seg = cur + amp * np.sin(2.0 * np.pi * np.arange(n) / period)
            cur = seg[-1]
        out[i:i + n] = seg
        i += n
    clamped = np.clip(out, u_min, u_max)
    return clamped, int(np.count_nonzero(clamped != out))


def generate_dataset(plant, excitation_cfg: ExcitationConfig | None = None, M=20_000,
                     u_sequence=None) -> InverseDataset:
    """Drive ``plant`` from rest with an excitation program and record angles."""
    if M < 2:
        raise ValueError("M must be >= 2")
    cfg = excitation_cfg or ExcitationConfig()
    if u_sequence is None:
        u, n_clamped = excitation_signal(M, plant.u_min, plant.u_max, cfg)
    else:
        raw = np.asarray(u_sequence, dtype=float)[:M]
        u = np.clip(raw, plant.u_min, plant.u_max)
        n_clamped = int(np.count_nonzero(u != raw))
    if n_clamped:
        log.info("excitation clamped at %d of %d samples", n_clamped, M)
    p = np.empty(M + 1)
    p[0] = plant.reset().theta
    for t in range(M):
        p[t + 1] = plant.step(u[t]).theta
    return InverseDataset(p, u, n_clamped)


class InverseModel:
    """LSTM stack plus linear readout; state persists across ``step`` calls."""

    def __init__(self, hidden=32, layers=1, normalizer: Normalizer | None = None, seed=0,
                 net: Network | None = None):
        if net is None:
            rng = np.random.default_rng(seed)
            stack = []
            n_in = 2
            for _ in range(layers):
                stack.append(LSTM(n_in, hidden, rng=rng))
                n_in = hidden
            stack.append(Dense(n_in, 1, "linear", rng=rng))
            net = Network(stack)
        self.net = net
        self.normalizer = normalizer
        self.reset()

    @property
    def lstm_layers(self):
        return [layer for layer in self.net.layers if isinstance(layer, LSTM)]

    def reset(self):
        self.state = [layer.zero_state() for layer in self.lstm_layers]

    def inputs(self, p_t, p_next):
        nz = self.normalizer
        return np.stack([nz.p_norm(p_t), nz.p_norm(p_next)], axis=-1)

    def step(self, p_t: float, p_next: float) -> float:
        """One actuation value, advancing the carried state."""
        x = self.inputs(p_t, p_next)
        new_state = []
        for layer, (h, c) in zip(self.lstm_layers, self.state):
            h, c, _ = layer.step(x, h, c)
            new_state.append((h, c))
            x = h
        self.state = new_state
        y = x @ self.net.layers[-1].W.T + self.net.layers[-1].b
        return float(self.normalizer.u_denorm(y[0]))

    def predict_sequence(self, p_t, p_next) -> np.ndarray:
        """Fresh-state prediction over whole sequences."""
        x = self.inputs(np.asarray(p_t), np.asarray(p_next))
        y = self.net(x[:, None, :])[:, 0, 0]
        return self.normalizer.u_denorm(y)

    def to_dict(self):
        return {"network": network_to_dict(self.net), "normalizer": self.normalizer.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(normalizer=Normalizer(**d["normalizer"]), net=network_from_dict(d["network"]))


@dataclass
class InverseTrainReport:
    train_loss: list = field(default_factory=list)
    val_mse: float = float("nan")
    val_rel_error: float = float("nan")
    initial_loss: float = float("nan")


def _split(ds: InverseDataset, val_frac):
    M = len(ds)
    n_val = int(round(M * val_frac))
    cut = M - n_val
    return (0, cut), (cut, M)


def _window_loss(model, X, Y):
    """Mean squared error over a (T, B, 2) window batch, no gradient."""
    y = model.net(X)[..., 0]
    d = y - Y
    return float(np.mean(d * d))


def train_inverse(ds: InverseDataset, epochs=200, lr=1e-2, hidden=32, layers=1, window=50,
                  batch=16, val_frac=0.1, seed=0, lr_final=1e-4,
                  model: InverseModel | None = None, report: InverseTrainReport | None = None):
    """Fit the inverse model by truncated BPTT on contiguous windows.

    The last ``val_frac`` of the sequence is held out as one contiguous block.
    Returns ``(model, report)``; ``report.val_rel_error`` is the RMS error on
    the held-out block relative to the RMS of the held-out actuation.
    With ``lr_final`` set, the step size follows a cosine from ``lr`` to
    ``lr_final`` over the epochs.
    """
    nz = Normalizer(**ds.norm)
    model = model or InverseModel(hidden, layers, nz, seed)
    model.normalizer = nz
    rng = np.random.default_rng(seed + 1)
    opt = Adam(lr)
    report = report or InverseTrainReport()
    (a, b), (c, d) = _split(ds, val_frac)
    Xall = model.inputs(ds.p_t, ds.p_next)
    Yall = nz.u_norm(ds.u)
    n_win = (b - a) // window
    if n_win < 1:
        raise ValueError("training split is shorter than one BPTT window")

    def epoch_windows():
        off = int(rng.integers(0, (b - a) - n_win * window + 1))
        starts = a + off + window * rng.permutation(n_win)
        return starts

    # initial loss over the full training split
    full = Xall[a:a + n_win * window].reshape(n_win, window, 2).transpose(1, 0, 2)
    fullY = Yall[a:a + n_win * window].reshape(n_win, window).T
    report.initial_loss = _window_loss(model, full, fullY)
    for ep in range(epochs):
        if lr_final is not None:
            opt.lr = lr_final + (lr - lr_final) * 0.5 * (1.0 + math.cos(math.pi * ep / epochs))
        total, count = 0.0, 0
        starts = epoch_windows()
        for j in range(0, n_win, batch):
            st = starts[j:j + batch]
            idx = st[None, :] + np.arange(window)[:, None]
            X = Xall[idx]
            Y = Yall[idx]
            yhat, tape = model.net.forward(X)
            diff = yhat[..., 0] - Y
            loss = float(np.mean(diff * diff))
            if not math.isfinite(loss):
                raise TrainingError("non-finite inverse-model loss", {"epoch": ep})
            model.net.zero_grad()
            model.net.backward(tape, (2.0 / diff.size) * diff[..., None])
            opt(model.net)
            total += loss * diff.size
            count += diff.size
        report.train_loss.append(total / count)
    model.reset()
    if d > c:
        u_hat = model.predict_sequence(ds.p_t[c:d], ds.p_next[c:d])
        err = u_hat - ds.u[c:d]
        report.val_mse = float(np.mean(err * err))
        report.val_rel_error = float(np.sqrt(report.val_mse) / max(np.sqrt(np.mean(ds.u[c:d] ** 2)), 1e-12))
    return model, report


def open_loop_rollout(model: InverseModel, ref, u_min=None, u_max=None) -> np.ndarray:
    """Actuation for each reference transition, computed from the reference alone."""
    ref = np.asarray(ref, dtype=float)
    if ref.size < 2:
        raise ValueError("reference needs at least two points")
    model.reset()
    u = np.array([model.step(ref[t], ref[t + 1]) for t in range(ref.size - 1)])
    if u_min is not None or u_max is not None:
        u = np.clip(u, u_min, u_max)
    return u


def closed_loop_step(model: InverseModel, p_t: float, p_next_d: float) -> float:
    return model.step(p_t, p_next_d)


class OpenLoopLstmController:
    uses_measurement = False

    def __init__(self, model: InverseModel, u_min=0.0, u_max=200.0, name="lstm-open"):
        self.model, self.u_min, self.u_max, self.name = model, u_min, u_max, name

    def reset(self):
        self.model.reset()

    def act(self, obs):
        return min(max(self.model.step(obs.ref, obs.ref_next), self.u_min), self.u_max)


class ClosedLoopLstmController:
    uses_measurement = True

    def __init__(self, model: InverseModel, u_min=0.0, u_max=200.0, name="lstm-closed"):
        self.model, self.u_min, self.u_max, self.name = model, u_min, u_max, name

    def reset(self):
        self.model.reset()

    def act(self, obs):
        return min(max(closed_loop_step(self.model, obs.theta, obs.ref_next), self.u_min),
                   self.u_max)
