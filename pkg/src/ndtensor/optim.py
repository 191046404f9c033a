from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from src.ndtensor.module import Parameter


@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adamw_step(
    params: Sequence[Parameter],
    grads: Sequence[Optional[np.ndarray]],
    states: Sequence[AdamWState],
    lr: float,
    weight_decay: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One AdamW update with decoupled weight decay and bias correction, in place."""
    for p, g, s in zip(params, grads, states):
        if g is None:
            continue
        s.t += 1
        p.data *= 1.0 - lr * weight_decay
        s.m = beta1 * s.m + (1.0 - beta1) * g
        s.v = beta2 * s.v + (1.0 - beta2) * g * g
        m_hat = s.m / (1.0 - beta1**s.t)
        v_hat = s.v / (1.0 - beta2**s.t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class ParamGroup:
    params: list[Parameter]
    lr_scale: float = 1.0


@dataclass
class AdamW:
    """AdamW over parameter groups whose learning rates are scaled from `lr`."""

    groups: list[ParamGroup]
    lr: float
    weight_decay: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    states: dict[int, AdamWState] = field(default_factory=dict)

    def _state(self, p: Parameter) -> AdamWState:
        if id(p) not in self.states:
            self.states[id(p)] = AdamWState(np.zeros_like(p.data), np.zeros_like(p.data))
        return self.states[id(p)]

    def step(self) -> None:
        for group in self.groups:
            live = [p for p in group.params if p.trainable and p.grad is not None]
            adamw_step(
                live,
                [p.grad for p in live],
                [self._state(p) for p in live],
                lr=self.lr * group.lr_scale,
                weight_decay=self.weight_decay,
                beta1=self.betas[0],
                beta2=self.betas[1],
                eps=self.eps,
            )

    def zero_grad(self) -> None:
        for group in self.groups:
            for p in group.params:
                p.grad = None
