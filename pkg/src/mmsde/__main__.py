import sys

from mmsde.cli import main

sys.exit(main())
