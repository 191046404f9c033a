from typing import Iterator, Mapping

import numpy as np

from src.ndtensor.errors import CheckpointError
from src.ndtensor.tensor import ArrayLike, Tensor


class Parameter(Tensor):
    """A leaf tensor owned by a model, addressed by a path-like name."""

    def __init__(self, data: ArrayLike, trainable: bool = True, name: str = ""):
        super().__init__(data, requires_grad=trainable)
        self.name = name

    @property
    def trainable(self) -> bool:
        return self.requires_grad

    @trainable.setter
    def trainable(self, value: bool) -> None:
        self.requires_grad = value
        if not value:
            self.grad = None

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, trainable={self.trainable})"


class Module:
    """
    Base class for anything that owns parameters.

    Parameters are discovered from instance attributes in assignment order:
    a `Parameter`, a nested `Module`, or a list of modules. Names are the
    dotted attribute path, e.g. `fusion.layers.0.eca_z.mha.w_q`.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        seen: set[int] = set()
        for name, param in self._walk(prefix):
            if id(param) in seen:
                continue
            seen.add(id(param))
            param.name = name
            yield name, param

    def _walk(self, prefix: str) -> Iterator[tuple[str, Parameter]]:
        for key, value in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value._walk(f"{path}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item._walk(f"{path}.{i}.")

    def parameters(self, trainable_only: bool = False) -> list[Parameter]:
        return [p for _, p in self.named_parameters() if p.trainable or not trainable_only]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def freeze(self) -> None:
        for p in self.parameters():
            p.trainable = False

    def unfreeze(self) -> None:
        for p in self.parameters():
            p.trainable = True

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        for name in state:
            if name not in params:
                raise CheckpointError("Unknown parameter", name)
        for name, p in params.items():
            if name not in state:
                raise CheckpointError("Missing parameter", name)
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise CheckpointError(f"Shape mismatch {value.shape} vs {p.shape}", name)
            p.data = value.astype(p.data.dtype, copy=True)


def count_parameters(module: Module, trainable_only: bool = True) -> int:
    """Exact number of scalar parameters (trainable ones by default)."""
    return sum(p.size for p in module.parameters(trainable_only=trainable_only))


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)
