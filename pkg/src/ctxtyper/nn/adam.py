"""Adam with bias correction, operating in place on ModelParams."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams


@dataclass
class AdamState:
    first: ModelParams  # running mean of gradients
    second: ModelParams  # running mean of squared gradients
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(first=params.zeros_like(), second=params.zeros_like(), step=0)


def adam_step(
    params: ModelParams,
    grads: ModelParams,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected update; mutates params and state, returns both."""
    state.step += 1
    correct1 = 1.0 - beta1 ** state.step
    correct2 = 1.0 - beta2 ** state.step
    for (_, p), (_, g), (_, m), (_, v) in zip(
        params.blocks(), grads.blocks(), state.first.blocks(), state.second.blocks()
    ):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        p -= lr * (m / correct1) / (np.sqrt(v / correct2) + eps)
    return params, state
