import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from event_data.errors import ConfigError, ShapeError

"""
Adam optimizer and the cosine learning-rate schedule with linear warm-up
"""


@dataclass
class OptimizerState:
    base_lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def adam_step(params, grads, state: OptimizerState, lr=None):
    """
    one Adam update with bias correction, parameters are numpy arrays updated in place

    :param params:  list of arrays
    :param grads:   list of gradient arrays (None is treated as zero)
    :param state:   moment buffers, created on the first call
    :param lr:      learning rate of this step, defaults to state.base_lr
    :return: state
    """
    if len(params) != len(grads):
        raise ShapeError("%d parameters but %d gradients" % (len(params), len(grads)))
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ShapeError("optimizer state holds %d buffers for %d parameters" % (len(state.m), len(params)))
    lr = state.base_lr if lr is None else lr
    state.step += 1
    correction1 = 1 - state.beta1 ** state.step
    correction2 = 1 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError("gradient shape %s does not match parameter shape %s" % (g.shape, p.shape))
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        p -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)
    return state


class Adam:
    """
    Adam over the trainable parameters of a model
    """

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = [p for p in params if p.trainable]
        self.state = OptimizerState(base_lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, lr=None):
        adam_step([p.data for p in self.params], [p.grad for p in self.params], self.state, lr=lr)


def cosine_warmup_lr(step, total_steps, base_lr, warmup_frac=0.1):
    """
    linear ramp 0 -> base_lr over the first warmup_frac of the steps, then cosine decay to 0 at total_steps
    """
    if total_steps < 1:
        raise ConfigError("total_steps must be positive, got %d" % total_steps)
    if step < 0 or step > total_steps:
        raise ConfigError("step %d outside [0, %d]" % (step, total_steps))
    if not 0 <= warmup_frac < 1:
        raise ConfigError("warmup_frac must be in [0, 1), got %s" % warmup_frac)
    warmup_steps = warmup_frac * total_steps
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return 0.5 * base_lr * (1 + math.cos(math.pi * progress))
