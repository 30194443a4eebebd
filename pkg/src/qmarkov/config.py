"""Numerical tolerances and size caps used across the package.

Caps can be overridden per call (every capped function takes a ``cap``
argument) or globally through environment variables:

* ``QMARKOV_OP_DIM_CAP``    -- largest dense operator dimension (default 4096)
* ``QMARKOV_TABLE_CAP``     -- largest dense probability table (default 10**7 entries)
"""

import os

# structural checks: unitality, orthonormality, stochasticity
STRUCT_TOL = 1e-10
# entrywise equality between two independently computed quantities
ORACLE_TOL = 1e-12
# probability-mass checks (row sums, table totals)
MASS_TOL = 1e-9

DEFAULT_OP_DIM_CAP = 4096
DEFAULT_TABLE_CAP = 10**7


def op_dim_cap() -> int:
    return int(os.environ.get("QMARKOV_OP_DIM_CAP", DEFAULT_OP_DIM_CAP))


def table_cap() -> int:
    return int(os.environ.get("QMARKOV_TABLE_CAP", DEFAULT_TABLE_CAP))


class CapExceededError(ValueError):
    """A dense operator or table would exceed the configured size cap."""
