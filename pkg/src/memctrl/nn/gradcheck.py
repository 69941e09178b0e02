"""Central finite-difference check of analytic gradients."""
from __future__ import annotations

import math

import numpy as np

from .optim import TrainingError


def grad_check(net, loss_fn, eps=1e-5, max_entries=None, rng=None):
    """Max relative error between backprop and central differences.

    ``loss_fn(net, backprop)`` must return the scalar loss and, when
    ``backprop`` is true, accumulate analytic gradients into ``net``. The
    relative error per entry is ``|a - n| / max(|a|, |n|, 1e-12)``.
    ``max_entries`` caps the number of entries checked per parameter
    (chosen at random with ``rng``).
    """
    net.zero_grad()
    loss0 = loss_fn(net, True)
    if not math.isfinite(loss0):
        raise TrainingError("loss is not finite", {"loss": loss0})
    analytic = [g.copy() for g in net.grads()]
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for p, a in zip(net.params(), analytic):
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_fn(net, False)
            flat[i] = orig - eps
            lm = loss_fn(net, False)
            flat[i] = orig
            if not (math.isfinite(lp) and math.isfinite(lm)):
                raise TrainingError("loss is not finite under perturbation", {"entry": int(i)})
            num = (lp - lm) / (2.0 * eps)
            ana = a.reshape(-1)[i]
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-12)
            worst = max(worst, err)
    net.zero_grad()
    return worst


def _mse_loss(x, target):
    def loss_fn(net, backprop):
        y, tape = net.forward(x)
        d = y - target
        if backprop:
            net.backward(tape, d / d.size)
        return 0.5 * float(np.sum(d * d)) / d.size
    return loss_fn


def gradcheck_suite(seed=0, eps=1e-5, lstm_lengths=(1, 3, 10)):
    """Finite-difference check of every layer kind.

    Returns ``[(case, max_rel_error), ...]``: one two-layer dense net per
    activation and one LSTM+readout unroll per length in ``lstm_lengths``.
    """
    from .layers import ACTIVATIONS, LSTM, Dense
    from .net import Network

    rng = np.random.default_rng(seed)
    out = []
    for act in ACTIVATIONS:
        net = Network([Dense(3, 4, act, rng=rng), Dense(4, 2, act, rng=rng)])
        x = rng.standard_normal((5, 3))
        out.append((f"dense-{act}", grad_check(net, _mse_loss(x, rng.standard_normal((5, 2))), eps)))
    for T in lstm_lengths:
        net = Network([LSTM(2, 3, rng=rng), Dense(3, 1, "linear", rng=rng)])
        x = rng.standard_normal((T, 2, 2))
        out.append((f"lstm-T{T}", grad_check(net, _mse_loss(x, rng.standard_normal((T, 2, 1))), eps)))
    return out
