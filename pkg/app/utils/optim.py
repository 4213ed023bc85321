# *** imports

# ** core
from typing import Callable, Dict, Tuple

# ** infra
import numpy as np
from tiferet.events import RaiseError

# ** app
from .config import TrainConfig
from .params import ParameterStore


# *** utils

# ** util: adam_optimizer
class AdamOptimizer:
    '''
    Adam with bias correction over a ParameterStore, moments keyed by
    parameter name.
    '''

    # * init
    def __init__(self, store: ParameterStore, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.steps = 0
        self.m: Dict[str, np.ndarray] = {name: np.zeros_like(t.data) for name, t in store.items()}
        self.v: Dict[str, np.ndarray] = {name: np.zeros_like(t.data) for name, t in store.items()}

    # * method: adam_step (static)
    @staticmethod
    def adam_step(
            param: np.ndarray,
            grad: np.ndarray,
            m: np.ndarray,
            v: np.ndarray,
            step: int,
            lr: float,
            beta1: float = 0.9,
            beta2: float = 0.999,
            eps: float = 1e-8,
        ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        '''
        One bias-corrected Adam update.

        :param param: The parameter values.
        :type param: np.ndarray
        :param grad: The gradient.
        :type grad: np.ndarray
        :param m: The first moment.
        :type m: np.ndarray
        :param v: The second moment.
        :type v: np.ndarray
        :param step: The 1-based step number.
        :type step: int
        :param lr: The learning rate.
        :type lr: float
        :return: Updated (param, m, v).
        :rtype: Tuple[np.ndarray, np.ndarray, np.ndarray]
        '''

        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1 ** step)
        v_hat = v / (1.0 - beta2 ** step)
        return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v

    # * method: step
    def step(self, lr_for: Callable[[str], float]) -> None:
        '''
        Update every parameter from its accumulated gradient.

        :param lr_for: Maps a parameter name to its learning rate.
        :type lr_for: Callable[[str], float]
        '''

        # Reject the whole step before touching any parameter.
        grads = {}
        for name, tensor in self.store.items():
            grad = np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad
            if not np.isfinite(grad).all():
                RaiseError.execute(
                    error_code='NAN_GRADIENT',
                    parameter=name,
                    step=self.steps + 1,
                )
            grads[name] = grad

        self.steps += 1
        for name, tensor in self.store.items():
            tensor.data[...], self.m[name], self.v[name] = AdamOptimizer.adam_step(
                tensor.data, grads[name], self.m[name], self.v[name], self.steps,
                lr_for(name), self.beta1, self.beta2, self.eps,
            )

    # * method: state
    def state(self) -> Dict[str, np.ndarray]:
        state = {f'adam.m/{name}': values.copy() for name, values in self.m.items()}
        state.update({f'adam.v/{name}': values.copy() for name, values in self.v.items()})
        return state

    # * method: load_state
    def load_state(self, state: Dict[str, np.ndarray], steps: int) -> None:
        '''
        Restore moments saved by state(); names and shapes must match.
        '''

        for prefix, moments in (('adam.m/', self.m), ('adam.v/', self.v)):
            for name, current in moments.items():
                values = state.get(prefix + name)
                if values is None or values.shape != current.shape:
                    RaiseError.execute(
                        error_code='CHECKPOINT_INCOMPATIBLE',
                        reason=f'optimizer moment {prefix}{name} is missing or mis-shaped',
                    )
                moments[name] = np.array(values, dtype=np.float64)
        self.steps = int(steps)


# ** util: learning_rate_schedule
class LearningRateSchedule:
    '''
    Piecewise-constant step decay with a reduced backbone rate.
    '''

    # * method: lr_at (static)
    @staticmethod
    def lr_at(epoch: int, config: TrainConfig, is_backbone: bool) -> float:
        '''
        Base rate before the milestone, ×decay from the milestone on;
        backbone parameters are further scaled by backbone_lr_scale.
        '''

        lr = config.base_lr
        if epoch >= config.milestone:
            lr *= config.lr_decay
        if is_backbone:
            lr *= config.backbone_lr_scale
        return lr

    # * method: clip_gradients (static)
    @staticmethod
    def clip_gradients(store: ParameterStore, max_norm: float) -> float:
        '''
        Rescale all gradients so their global L2 norm is at most max_norm.

        :return: The norm before clipping.
        :rtype: float
        '''

        total = 0.0
        for _, tensor in store.items():
            if tensor.grad is not None:
                total += float(np.sum(tensor.grad * tensor.grad))
        norm = float(np.sqrt(total))
        if np.isfinite(norm) and norm > max_norm:
            scale = max_norm / norm
            for _, tensor in store.items():
                if tensor.grad is not None:
                    tensor.grad = tensor.grad * scale
        return norm
