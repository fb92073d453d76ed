import sys

from fissura.cli import main

sys.exit(main())
