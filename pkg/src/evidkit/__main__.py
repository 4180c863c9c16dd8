"""Entry point for `python -m evidkit`."""

import sys

from .cli import main

sys.exit(main())
