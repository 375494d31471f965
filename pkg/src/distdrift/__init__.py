"""Semilinear elliptic problems with distributional drift.

Submodules:

- ``coefficients``: sigma/beta fields, scale function, well-posedness check
- ``linear``: linear initial value and Dirichlet problems, Green kernel
- ``semilinear``: Picard, shooting and kernel fixed-point solvers
- ``forward``: Monte Carlo paths and exit-time statistics
- ``bsde``: BSDE triples built from PDE solutions
- ``cli``: the ``distdrift`` command

The package root stays light (no numba import) so the command line can
configure threading before the kernels load.
"""

__version__ = "0.1.0"
