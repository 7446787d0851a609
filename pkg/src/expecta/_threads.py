"""Thread-count plumbing; must run before numpy is first imported.

EXPECTA_THREADS caps BLAS/OpenMP parallelism for the whole process; the
value 0 selects single-threaded reference mode.  Unset leaves whatever
the environment already configured.
"""

import os

_BLAS_VARS = (
    "OPENBLAS_NUM_THREADS",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def configure() -> None:
    value = os.environ.get("EXPECTA_THREADS")
    if value is None:
        return
    value = value.strip()
    if not value.isdigit():
        return
    n = "1" if value == "0" else value
    for var in _BLAS_VARS:
        os.environ[var] = n
