"""Adam optimizer and step learning-rate decay."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .autograd import ShapeError, Tensor


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor | np.ndarray],
    grads: Mapping[str, np.ndarray | None],
    state: AdamState,
) -> tuple[Mapping[str, Tensor | np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied to ``params`` in place.

    Parameters with a ``None`` gradient are treated as having a zero gradient.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        value = p.data if isinstance(p, Tensor) else p
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(value)
        elif g.shape != value.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {value.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        elif m.shape != value.shape:
            raise ShapeError(f"optimizer state for {name!r} has shape {m.shape}, parameter {value.shape}")
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        value -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(value.dtype, copy=False)
    return params, state


@dataclass(frozen=True)
class StepDecay:
    """Multiply the base rate by ``factor`` once per milestone passed.

    Epochs are 1-based; a milestone ``m`` applies from epoch ``m + 1`` on.
    """

    base_lr: float
    factor: float = 0.1
    milestones: Sequence[int] = ()

    def __post_init__(self) -> None:
        if self.base_lr <= 0:
            raise ValueError("base learning rate must be positive")
        if not 0 < self.factor <= 1:
            raise ValueError("decay factor must be in (0, 1]")
        object.__setattr__(self, "milestones", tuple(sorted(int(m) for m in self.milestones)))

    def lr_at(self, epoch: int) -> float:
        passed = sum(1 for m in self.milestones if epoch > m)
        return self.base_lr * self.factor ** passed
