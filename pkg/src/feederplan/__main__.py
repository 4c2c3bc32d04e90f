import sys

from feederplan.runner import main

sys.exit(main())
