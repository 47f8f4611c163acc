import sys

from qsdc_qpa.cli import main

sys.exit(main())
