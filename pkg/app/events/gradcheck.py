# *** imports

# ** core
import logging
import time

# ** app
from .settings import CliEvent
from ..utils import GradCheckSuites
from ..utils.gradsuite import DEFAULT_TRIALS


# *** events

# ** event: run_grad_check
class RunGradCheck(CliEvent):
    '''
    A domain event to compare every differentiable operation's analytic
    gradients against central finite differences.
    '''

    # * method: execute
    def execute(self,
            module: str = None,
            trials: str = None,
            **kwargs,
        ) -> str:
        '''
        Run one suite, or all of them.

        :param module: The suite name; None or 'all' runs every suite.
        :type module: str
        :param trials: Randomized trials per operation.
        :type trials: str
        :param kwargs: Additional keyword arguments.
        :type kwargs: dict
        :return: One line per operation with its worst relative error.
        :rtype: str
        '''

        logger = logging.getLogger('fan.gradcheck')
        trials = self.parse_int('trials', trials, 1) or DEFAULT_TRIALS
        suites = GradCheckSuites.names() if module in (None, '', 'all') else [module]

        lines, failures = [], []
        start = time.perf_counter()
        for suite in suites:
            for op, report in GradCheckSuites.run(suite, trials).items():
                status = 'ok' if report.passed else 'FAIL'
                lines.append(f'{suite:<11} {op:<22} max rel err {report.worst:.2e}  {status}')
                logger.info('%s.%s worst %.3e over %d entries', suite, op, report.worst, report.checked)
                if not report.passed:
                    failures.append(f'{suite}.{op}')
        lines.append(f'Trials per op: {trials}  Time: {time.perf_counter() - start:.1f}s')

        output = '\n'.join(lines)
        self.verify(
            not failures,
            'GRADCHECK_FAILED',
            f'Gradient check failed for {", ".join(failures)}.',
            operations=', '.join(failures),
        )
        return output
