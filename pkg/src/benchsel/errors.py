"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: usage errors exit 1,
DataError exits 2, NumericalError exits 3.
"""


class DataError(ValueError):
    """Malformed or inconsistent input data (CSV structure, invariants)."""


class NumericalError(RuntimeError):
    """A numerical routine failed beyond its configured fallbacks."""
