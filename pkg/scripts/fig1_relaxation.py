"""Single-oscillator relaxation: master equation, pure diffusion and Langevin ensemble.

    python scripts/fig1_relaxation.py [--output-dir runs/relax] [extra openchain flags]
"""

import sys

from openchain.cli import main

if __name__ == "__main__":
    sys.exit(main(["relax", "--output-dir", "runs/relax", *sys.argv[1:]]))
