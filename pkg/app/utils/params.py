# *** imports

# ** core
import zlib
from typing import Dict, Iterator, List, Sequence, Tuple

# ** infra
import numpy as np
from tiferet.events import RaiseError

# ** app
from .tensor import Tensor


# *** constants

# ** constant: backbone_tag
BACKBONE_TAG = 'backbone'

# ** constant: head_tag
HEAD_TAG = 'head'


# *** utils

# ** util: seed_streams
class SeedStreams:
    '''
    Derives independent random generators from one root seed and a stream
    name, so adding or removing a consumer never shifts another's draws.
    '''

    # * method: rng (static)
    @staticmethod
    def rng(seed: int, stream: str) -> np.random.Generator:
        '''
        Build the generator for a named stream.

        :param seed: The root seed.
        :type seed: int
        :param stream: The stream name (e.g. 'init/text.embed', 'shuffle/3').
        :type stream: str
        :return: A numpy generator.
        :rtype: np.random.Generator
        '''

        return np.random.default_rng([int(seed), zlib.crc32(stream.encode('utf-8'))])


# ** util: parameter_store
class ParameterStore:
    '''
    Owns every trainable tensor of a model under a stable dotted name, with a
    tag ('backbone' or 'head') used by the learning-rate schedule.
    '''

    # * init
    def __init__(self, seed: int = 0):
        '''
        :param seed: The root seed for parameter initialization.
        :type seed: int
        '''

        self.seed = seed
        self.params: Dict[str, Tensor] = {}
        self.tags: Dict[str, str] = {}

    # * method: create
    def create(self,
            name: str,
            shape: Sequence[int],
            init: str = 'normal',
            fan_in: int = None,
            std: float = None,
            tag: str = HEAD_TAG,
        ) -> Tensor:
        '''
        Declare a parameter. Values are drawn from a stream named after the
        parameter, so identical names receive identical values across models.

        :param name: The dotted parameter name.
        :type name: str
        :param shape: The parameter shape.
        :type shape: Sequence[int]
        :param init: 'normal' (std 1/sqrt(fan_in)), 'kaiming' (std sqrt(2/fan_in)), 'zeros' or 'ones'.
        :type init: str
        :param fan_in: The fan-in; defaults to the product of all but the last dim.
        :type fan_in: int
        :param std: Explicit standard deviation for 'normal', overriding fan-in scaling.
        :type std: float
        :param tag: The learning-rate group.
        :type tag: str
        :return: The created tensor.
        :rtype: Tensor
        '''

        if name in self.params:
            RaiseError.execute(
                error_code='INVALID_CONFIG',
                field=name,
                reason='parameter declared twice',
            )

        shape = tuple(int(s) for s in shape)
        if fan_in is None:
            fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else shape[0]

        rng = SeedStreams.rng(self.seed, f'init/{name}')
        if init == 'zeros':
            values = np.zeros(shape)
        elif init == 'ones':
            values = np.ones(shape)
        elif init == 'kaiming':
            values = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        elif init == 'normal':
            values = rng.normal(0.0, std if std is not None else 1.0 / np.sqrt(fan_in), size=shape)
        else:
            RaiseError.execute(
                error_code='INVALID_CONFIG',
                field=name,
                reason=f'unknown initializer {init}',
            )

        tensor = Tensor(values, requires_grad=True)
        self.params[name] = tensor
        self.tags[name] = tag
        return tensor

    # * method: get
    def get(self, name: str) -> Tensor:
        if name not in self.params:
            RaiseError.execute(
                error_code='INVALID_CONFIG',
                field=name,
                reason='parameter was never declared',
            )
        return self.params[name]

    # * method: scope
    def scope(self, prefix: str) -> 'ParamScope':
        return ParamScope(self, prefix)

    # * method: names
    def names(self) -> List[str]:
        return sorted(self.params)

    # * method: items
    def items(self) -> Iterator[Tuple[str, Tensor]]:
        for name in self.names():
            yield name, self.params[name]

    # * method: is_backbone
    def is_backbone(self, name: str) -> bool:
        return self.tags.get(name) == BACKBONE_TAG

    # * method: count
    def count(self) -> int:
        return int(sum(t.data.size for t in self.params.values()))

    # * method: zero_grad
    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.grad = None

    # * method: state
    def state(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.items()}

    # * method: load_state
    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        '''
        Replace parameter values in place; names and shapes must match exactly.

        :param state: Name-keyed arrays.
        :type state: Dict[str, np.ndarray]
        '''

        if set(state) != set(self.params):
            missing = sorted(set(self.params) - set(state))
            extra = sorted(set(state) - set(self.params))
            RaiseError.execute(
                error_code='CHECKPOINT_INCOMPATIBLE',
                reason=f'parameter names differ (missing {missing[:3]}, unexpected {extra[:3]})',
            )
        for name, values in state.items():
            tensor = self.params[name]
            if tensor.shape != tuple(values.shape):
                RaiseError.execute(
                    error_code='CHECKPOINT_INCOMPATIBLE',
                    reason=f'{name} has shape {tuple(values.shape)}, expected {tensor.shape}',
                )
            tensor.data[...] = values


# ** util: param_scope
class ParamScope:
    '''
    A prefixed view over a ParameterStore: scope['wq'] resolves to
    '<prefix>.wq'. Declaration helpers use the scope's tag.
    '''

    # * init
    def __init__(self, store: ParameterStore, prefix: str, tag: str = HEAD_TAG):
        self.store = store
        self.prefix = prefix
        self.tag = tag

    # * method: name
    def name(self, key: str) -> str:
        return f'{self.prefix}.{key}' if self.prefix else key

    # * method: __getitem__
    def __getitem__(self, key: str) -> Tensor:
        return self.store.get(self.name(key))

    # * method: __contains__
    def __contains__(self, key: str) -> bool:
        return self.name(key) in self.store.params

    # * method: scope
    def scope(self, key: str) -> 'ParamScope':
        return ParamScope(self.store, self.name(key), self.tag)

    # * method: tagged
    def tagged(self, tag: str) -> 'ParamScope':
        return ParamScope(self.store, self.prefix, tag)

    # * method: create
    def create(self, key: str, shape: Sequence[int], init: str = 'normal', **kwargs) -> Tensor:
        kwargs.setdefault('tag', self.tag)
        return self.store.create(self.name(key), shape, init=init, **kwargs)
