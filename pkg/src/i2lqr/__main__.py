"""Allow `python -m i2lqr` as an alias for the `i2lqr` console script."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
