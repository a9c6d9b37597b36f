"""
Entry point: python dewarp.py <command> [options]

See cli/commands.py for the subcommands and README.md for the report schema.
"""

import sys

from cli.commands import main

if __name__ == "__main__":
    sys.exit(main())
