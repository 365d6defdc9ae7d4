"""Adam optimizer with bias correction."""

from __future__ import annotations

import numpy as np

from ..errors import TrainingDiverged


class Adam:
    """Standard Adam: first/second moment estimates with bias correction.

    Parameters are updated in place.  Moment tensors are created lazily per
    parameter name on the first step, matching the parameter dtype.
    """

    def __init__(self, lr: float = 1e-5, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged(
                    f"non-finite gradient for {name!r} at step {self.step_count + 1}"
                )
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for name, m in self.m.items():
            out[f"opt.m/{name}"] = m
            out[f"opt.v/{name}"] = self.v[name]
        return out

    def hyperparams(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step_count": self.step_count,
        }

    @classmethod
    def from_hyperparams(cls, h: dict) -> "Adam":
        opt = cls(lr=h["lr"], beta1=h["beta1"], beta2=h["beta2"], eps=h["eps"])
        opt.step_count = int(h["step_count"])
        return opt
