# *** imports

# ** core
import sys
from typing import Any

# ** infra
from tiferet.contexts.cli import CliContext
from tiferet.assets.exceptions import TiferetError, TiferetAPIError


# *** constants

# ** constant: exit codes
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

# ** constant: runtime_error_codes
# Failures raised while a valid command was running. Every other error code
# rejects the command's input.
RUNTIME_ERROR_CODES = frozenset({
    'SHAPE_MISMATCH',
    'CONTRACT_VIOLATION',
    'DEGENERATE_MASK',
    'GENERATION_FAILED',
    'NAN_GRADIENT',
    'TRAINING_DIVERGED',
    'CHECKPOINT_CORRUPT',
    'GRADCHECK_FAILED',
})


# *** contexts

# ** context: fan_cli_context
class FanCliContext(CliContext):
    '''
    The CLI context for the FAN commands. Exits 0 on success, 1 on usage or
    validation errors and 2 on runtime failures.
    '''

    # * method: exit_code (static)
    @staticmethod
    def exit_code(error: Exception) -> int:
        '''
        Map a failure to the process exit code.

        :param error: The raised error.
        :type error: Exception
        :return: The exit code.
        :rtype: int
        '''

        if isinstance(error, TiferetError) and error.error_code not in RUNTIME_ERROR_CODES:
            return EXIT_VALIDATION
        return EXIT_RUNTIME

    # * method: run
    def run(self) -> Any:
        '''
        Parse the command line, execute the feature and print its result.
        Exits the process with a non-zero code on failure.
        '''

        logger = self.logging.build_logger()

        # argparse exits with status 2 on usage errors; report them as 1.
        try:
            cli_request = self.parse_request()
        except SystemExit as e:
            if e.code in (None, EXIT_OK):
                raise
            sys.exit(EXIT_VALIDATION)
        except Exception as e:
            logger.error(f'Error parsing CLI request: {e}')
            print(e, file=sys.stderr)
            sys.exit(EXIT_VALIDATION)

        try:
            logger.info(f'Executing feature for CLI request: {cli_request.feature_id}')
            self.execute_feature(
                feature_id=cli_request.feature_id,
                request=cli_request,
                logger=logger,
            )
        except TiferetError as e:
            logger.error(f'Error executing CLI feature {cli_request.feature_id}: {e}')
            try:
                self.handle_error(e)
            except TiferetAPIError as api_error:
                print(api_error, file=sys.stderr)
            sys.exit(self.exit_code(e))
        except Exception as e:
            logger.error(f'Runtime failure in CLI feature {cli_request.feature_id}: {e}')
            print(f'Runtime failure: {e}', file=sys.stderr)
            sys.exit(self.exit_code(e))

        print(cli_request.handle_response())
