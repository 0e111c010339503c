import sys

from globalhash.cli import main

sys.exit(main())
