import sys

from twrelay.cli import main

sys.exit(main())
