"""Run the ``qfces`` command line: ``python -m qfces``."""

import sys

from .cli import main

sys.exit(main())
