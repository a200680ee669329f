"""Run the command line with `python -m ionlink`."""
import sys

from ionlink.cli import main

sys.exit(main())
