from __future__ import annotations

from engine.tensor_class import Tensor, Parameter
from classes.errors import ConfigError

from scipy.stats import truncnorm
import numpy as np

INIT_STD = 0.02

class ParamGroup:
    """
    Hierarchical container of named parameters

    Child groups extend the dotted name path ("enc.stage0.block1.msa") and share
    the root's registry, so names stay unique across the whole model.

    :param name: dotted path of this group ('' for the root)
    :param rng: numpy Generator used for initialisation
    :param registry: shared name -> Parameter dict (created by the root)
    """
    def __init__(self, name: str = '', rng: np.random.Generator = None, registry: dict = None):
        self.name = name
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.registry: dict = registry if registry is not None else {}
        self.params: dict = {}
        self.groups: dict = {}

    def _path(self, key: str) -> str:
        return f'{self.name}.{key}' if self.name else key

    def _add(self, key: str, data: np.ndarray) -> Tensor:
        path = self._path(key)
        if path in self.registry:
            raise ConfigError(f'duplicate parameter name: {path}')
        tensor = Tensor(data, requires_grad=True, name=path)
        parameter = Parameter(path, tensor)
        self.registry[path] = parameter
        self.params[key] = parameter
        return tensor

    def weight(self, key: str, shape: tuple, std: float = INIT_STD) -> Tensor:
        """
        Truncated-normal (+-2 std) initialised weight
        """
        values = truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=shape, random_state=self.rng)
        return self._add(key, values)

    def zeros(self, key: str, shape: tuple) -> Tensor:
        return self._add(key, np.zeros(shape))

    def full(self, key: str, shape: tuple, value: float) -> Tensor:
        return self._add(key, np.full(shape, value))

    def group(self, key: str) -> ParamGroup:
        child = ParamGroup(self._path(key), self.rng, self.registry)
        self.groups[key] = child
        return child

    def __getitem__(self, key: str) -> Tensor:
        return self.params[key].tensor

    def sub(self, key: str) -> ParamGroup:
        return self.groups[key]

    def named_parameters(self) -> list:
        """
        All parameters below this group in creation order
        :return: [Parameter, ...]
        """
        prefix = f'{self.name}.' if self.name else ''
        return [p for path, p in self.registry.items() if not self.name or path.startswith(prefix)]

    def parameter_count(self) -> int:
        return int(sum(p.tensor.size for p in self.named_parameters()))

    def zero_grad(self):
        for parameter in self.named_parameters():
            parameter.tensor.grad = None
