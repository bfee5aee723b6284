"""Parameter store and bias-corrected Adam."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class ParamStore:
    """Flat namespace of named parameter tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def create(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already exists")
        p = Tensor(np.array(array, dtype=float), requires_grad=True)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(arrays)
        if missing:
            raise ValueError(f"missing parameters: {sorted(missing)}")
        for name, p in self._params.items():
            incoming = np.asarray(arrays[name], dtype=float)
            if incoming.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name!r}: "
                                 f"{incoming.shape} vs {p.data.shape}")
            p.data = incoming.copy()


class Adam:
    """Standard Adam with bias correction; moments are shaped like their
    parameters and the step counter starts at zero."""

    def __init__(self, store: ParamStore, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in store.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in store.items()}

    def step(self) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.step_count
        bias2 = 1.0 - b2 ** self.step_count
        for name, p in self.store.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"adam.step": np.array([self.step_count], dtype=float)}
        for name in self.store.names():
            out[f"adam.m.{name}"] = self.m[name].copy()
            out[f"adam.v.{name}"] = self.v[name].copy()
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.step_count = int(arrays["adam.step"][0])
        for name in self.store.names():
            self.m[name] = np.asarray(arrays[f"adam.m.{name}"], dtype=float).copy()
            self.v[name] = np.asarray(arrays[f"adam.v.{name}"], dtype=float).copy()
