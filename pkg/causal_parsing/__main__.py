"""Entry point for ``python -m causal_parsing``."""

import sys

from .cli import main

sys.exit(main())
