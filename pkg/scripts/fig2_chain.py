"""Actions and current of the five-site chain for g = 0 and g = 2, starting at rest."""

import sys

from openchain.cli import main

if __name__ == "__main__":
    sys.exit(main(["chain", "--g-values", "0,2", "--output-dir", "runs/chain", *sys.argv[1:]]))
