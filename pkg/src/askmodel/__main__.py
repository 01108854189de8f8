"""Module entry point so ``python3 -m askmodel`` behaves like the console script."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
