"""Module bookkeeping shared by the encoders and heads."""

from __future__ import annotations

import numpy as np

from .tensor import Parameter, RngStream, Tensor, ops


class Module:
    """Parameter container with dotted names and a train/eval switch.

    Parameters and submodules are discovered from instance attributes in
    assignment order; lists of modules are indexed (``blocks.0.``).
    """

    training = False

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, (Module, Parameter)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Module, Parameter)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = ""):
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            else:
                yield from value.named_parameters(full + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self) -> list[Parameter]:
        return [p for p in self.parameters() if p.requires_grad]

    def modules(self):
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def name_parameters(self):
        for name, p in self.named_parameters():
            p.name = name
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True):
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            if missing or extra:
                raise KeyError(f"state mismatch; missing={missing[:5]} unexpected={extra[:5]}")
        for name, arr in state.items():
            if name not in own:
                continue
            p = own[name]
            if tuple(arr.shape) != p.shape:
                raise ValueError(f"{name}: expected shape {p.shape}, got {tuple(arr.shape)}")
            p.data[...] = arr
        return self


def glorot(rng: RngStream, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, shape).astype(dtype)


class Linear(Module):
    """Affine map with weight stored as (out, in), one row per output unit."""

    def __init__(self, d_in: int, d_out: int, rng: RngStream, dtype=np.float32,
                 bias: bool = True, max_norm: float | None = None):
        self.weight = Parameter(glorot(rng, (d_out, d_in), d_in, d_out, dtype), max_norm=max_norm)
        self.bias = Parameter(np.zeros(d_out, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)
