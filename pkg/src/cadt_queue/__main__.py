import sys

from cadt_queue.cli import main

sys.exit(main())
