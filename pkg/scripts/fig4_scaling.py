"""Stationary current against inverse chain length at g = 2.

Runs both reservoir settings DL = 0.25 and DL = 0 into separate directories.
This is the longest experiment (several minutes per core for M = 4000).
"""

import sys

from openchain.cli import main

if __name__ == "__main__":
    extra = sys.argv[1:]
    code = main(["scaling", "--g", "2", "--dL", "0.25", "--output-dir", "runs/scaling", *extra])
    if code == 0:
        code = main(["scaling", "--g", "2", "--dL", "0", "--output-dir", "runs/scaling_dl0", *extra])
    sys.exit(code)
