"""Per-site stationary spectra of the five-site chain for g = 0 and g = 2."""

import sys

from openchain.cli import main

if __name__ == "__main__":
    sys.exit(main(["spectra", "--g-values", "0,2", "--output-dir", "runs/spectra", *sys.argv[1:]]))
