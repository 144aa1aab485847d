import sys

from knowspace.cli import main

sys.exit(main())
