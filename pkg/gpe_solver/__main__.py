import sys

from gpe_solver.main import main

sys.exit(main())
