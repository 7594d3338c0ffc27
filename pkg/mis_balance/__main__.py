import sys

from mis_balance.bench import main

sys.exit(main())
