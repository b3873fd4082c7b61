"""
Main Entry Point for the Operator Lab

Usage:
    # Commutator constant of b relative to a normal matrix a
    python main.py kappa-exact --a a.json --b b.json

    # Schur norm of the divided differences of t^2 on three points
    python main.py schur-norm --function square --points 0,1,2

    # Intertwining residuals of the Cauchy-Green map for a truncated square
    python main.py tfa-verify --a a.json --f fsq --h 0.02 0.01 0.005

Run `python main.py <subcommand> --help` for the flags of each experiment.
"""

import sys

from operator_lab.cli import main


if __name__ == '__main__':
    sys.exit(main())
