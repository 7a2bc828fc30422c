import sys

from ure_eval.main import cli_main

sys.exit(cli_main())
