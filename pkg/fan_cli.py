# *** imports

# ** core
import sys

# ** infra
from tiferet import App


# *** main

# Create new app instance.
app = App()

# Load the CLI app instance.
cli = app.load_interface('fan_cli')


# * method: main
def main() -> int:
    '''
    Entry point for the FAN CLI. The CLI context exits 1 on validation or
    usage errors and 2 on runtime failures.
    '''

    cli.run()
    return 0


# Run the CLI app.
if __name__ == '__main__':
    sys.exit(main())
