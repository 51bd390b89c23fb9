import sys

from covsp.cli import main

sys.exit(main())
