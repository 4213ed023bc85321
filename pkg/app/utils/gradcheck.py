# *** imports

# ** core
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

# ** infra
import numpy as np

# ** app
from .params import SeedStreams
from .tensor import Tensor


# *** constants

# ** constant: default_tolerance
DEFAULT_TOLERANCE = 1e-4

# ** constant: default_step
DEFAULT_STEP = 1e-5


# *** models

# ** model: grad_check_report
@dataclass
class GradCheckReport:
    '''
    Worst relative error per checked tensor.
    '''

    errors: Dict[str, float] = field(default_factory=dict)
    tolerance: float = DEFAULT_TOLERANCE
    checked: int = 0

    # * property: worst
    @property
    def worst(self) -> float:
        return max(self.errors.values(), default=0.0)

    # * property: passed
    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance

    # * method: merge
    def merge(self, other: 'GradCheckReport') -> 'GradCheckReport':
        '''
        Fold another report in, keeping the worst error per name.
        '''

        for name, error in other.errors.items():
            self.errors[name] = max(self.errors.get(name, 0.0), error)
        self.checked += other.checked
        return self


# *** utils

# ** util: gradient_checker
class GradientChecker:
    '''
    Compares reverse-mode gradients against central finite differences.
    '''

    # * method: relative_error (static)
    @staticmethod
    def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
        return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)

    # * method: check (static)
    @staticmethod
    def check(
            fn: Callable[[], Tensor],
            params: Dict[str, Tensor],
            eps: float = DEFAULT_STEP,
            samples: Optional[int] = 3,
            seed: int = 0,
            floor: float = 1e-6,
            tolerance: float = DEFAULT_TOLERANCE,
            only: Optional[Sequence[str]] = None,
        ) -> GradCheckReport:
        '''
        Check the gradient of a scalar function with respect to named leaves.

        :param fn: Rebuilds the graph and returns the scalar output.
        :type fn: Callable[[], Tensor]
        :param params: The leaves to check, perturbed in place.
        :type params: Dict[str, Tensor]
        :param eps: The central difference step.
        :type eps: float
        :param samples: Entries checked per tensor; None checks every entry.
        :type samples: int
        :param seed: Seed for entry sampling.
        :type seed: int
        :param floor: Lower bound on the relative error denominator.
        :type floor: float
        :param tolerance: The pass threshold.
        :type tolerance: float
        :param only: Restrict the check to these tensor names.
        :type only: Sequence[str]
        :return: The report.
        :rtype: GradCheckReport
        '''

        rng = SeedStreams.rng(seed, 'gradcheck')

        # Analytic pass.
        for tensor in params.values():
            tensor.grad = None
        fn().backward()
        analytic = {
            name: np.zeros_like(t.data) if t.grad is None else t.grad.copy()
            for name, t in params.items()
        }

        names = sorted(params) if only is None else sorted(set(only) & set(params))

        report = GradCheckReport(tolerance=tolerance)
        for name in names:
            tensor = params[name]
            flat = tensor.data.reshape(-1)
            if samples is None or samples >= flat.size:
                indices = np.arange(flat.size)
            else:
                indices = rng.choice(flat.size, size=samples, replace=False)

            worst = 0.0
            for index in indices:
                original = flat[index]
                flat[index] = original + eps
                plus = fn().item()
                flat[index] = original - eps
                minus = fn().item()
                flat[index] = original
                numeric = (plus - minus) / (2.0 * eps)
                error = GradientChecker.relative_error(float(analytic[name].reshape(-1)[index]), numeric, floor)
                worst = max(worst, error)
            report.errors[name] = worst
            report.checked += len(indices)
        return report
