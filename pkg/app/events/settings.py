# *** imports

# ** core
from typing import Optional

# ** infra
from tiferet.events import *


# *** events

# ** event: cli_event
class CliEvent(DomainEvent):
    '''
    A domain event whose arguments may arrive as command-line strings.
    '''

    # * method: parse_int
    def parse_int(self, argument: str, value, minimum: int = None) -> Optional[int]:
        '''
        Convert an optional integer argument, raising INVALID_ARGUMENT when it
        is not an integer or falls below the minimum.

        :param argument: The argument name (for the error message).
        :type argument: str
        :param value: The raw value; None or '' mean "not given".
        :type value: Any
        :param minimum: The smallest accepted value.
        :type minimum: int
        :return: The integer, or None.
        :rtype: Optional[int]
        '''

        if value is None or value == '':
            return None
        try:
            number = int(value)
        except (TypeError, ValueError):
            number = None
        reason = 'must be an integer' if minimum is None else f'must be an integer >= {minimum}'
        self.verify(
            number is not None and (minimum is None or number >= minimum),
            'INVALID_ARGUMENT',
            f'Invalid value for {argument}: {value}',
            argument=argument,
            value=value,
            reason=reason,
        )
        return number

    # * method: parse_float
    def parse_float(self, argument: str, value) -> Optional[float]:
        if value is None or value == '':
            return None
        try:
            return float(value)
        except (TypeError, ValueError):
            self.verify(
                False,
                'INVALID_ARGUMENT',
                f'Invalid value for {argument}: {value}',
                argument=argument,
                value=value,
                reason='must be a number',
            )
