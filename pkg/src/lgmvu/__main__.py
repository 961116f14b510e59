import sys

from lgmvu.cli import main

sys.exit(main())
