"""Allow `python3 -m csmafade ...` as an alias for the csmafade script."""

import sys

from .cli import main

sys.exit(main())
