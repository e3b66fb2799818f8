import sys

from .simcli import main

sys.exit(main())
