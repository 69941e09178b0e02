"""Adam with bias correction, storing its moments on the network."""
from __future__ import annotations

import numpy as np


class TrainingError(RuntimeError):
    """Training aborted; ``diagnostics`` carries the context."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


def adam_step(net, lr=1e-3, beta1=0.9, beta2=0.999, eps_hat=1e-8):
    """One Adam update of every parameter of ``net``. Gradients are left as-is."""
    grads = net.grads()
    for j, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            name = net.named_params()[j][0]
            raise TrainingError(f"non-finite gradient in parameter {name}",
                                {"parameter": name, "adam_t": net.adam_t})
    net.adam_t += 1
    t = net.adam_t
    step = lr * np.sqrt(1.0 - beta2 ** t) / (1.0 - beta1 ** t)
    # eps scaled so the update equals lr*m_hat/(sqrt(v_hat)+eps_hat)
    eps = eps_hat * np.sqrt(1.0 - beta2 ** t)
    for p, g, m, v in zip(net.params(), grads, net.adam_m, net.adam_v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= step * m / (np.sqrt(v) + eps)
    return net


class Adam:
    """Callable wrapper binding hyperparameters, for trainers."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps_hat=1e-8):
        self.lr, self.beta1, self.beta2, self.eps_hat = lr, beta1, beta2, eps_hat

    def __call__(self, net):
        return adam_step(net, self.lr, self.beta1, self.beta2, self.eps_hat)
