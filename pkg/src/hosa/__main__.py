import sys

from hosa.cli import main

sys.exit(main())
