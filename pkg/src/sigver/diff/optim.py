"""Adam with bias correction and per-parameter moment state."""

from __future__ import annotations

import numpy as np

from .tensor import Parameter


class Adam:
    def __init__(self, params: dict[str, Parameter], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        self.t += 1
        adam_step(self.params, self.m, self.v, self.lr, self.beta1, self.beta2, self.eps, self.t)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"adam.m/{k}": v for k, v in self.m.items()}
        out.update({f"adam.v/{k}": v for k, v in self.v.items()})
        out["adam.t"] = np.array([self.t], dtype=np.float32)
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            self.m[name] = arrays[f"adam.m/{name}"].astype(p.dtype)
            self.v[name] = arrays[f"adam.v/{name}"].astype(p.dtype)
        self.t = int(arrays["adam.t"][0])


def adam_step(params: dict[str, Parameter], m: dict[str, np.ndarray], v: dict[str, np.ndarray],
              lr: float, beta1: float, beta2: float, eps: float, t: int) -> None:
    """One in-place Adam update of every parameter that has a gradient."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        dt = p.data.dtype
        m[name] = (beta1 * m[name] + (1.0 - beta1) * g).astype(dt)
        v[name] = (beta2 * v[name] + (1.0 - beta2) * g * g).astype(dt)
        m_hat = m[name] / dt.type(c1)
        v_hat = v[name] / dt.type(c2)
        p.data = (p.data - dt.type(lr) * m_hat / (np.sqrt(v_hat) + dt.type(eps))).astype(dt)
