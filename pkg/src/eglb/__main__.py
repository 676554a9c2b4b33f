import sys

from eglb.cli import main

sys.exit(main())
