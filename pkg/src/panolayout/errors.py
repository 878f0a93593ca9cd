"""Exception taxonomy shared by the library and the CLI.

ValidationError covers contract violations in inputs (bad shapes, bad JSON,
out-of-range configuration); NumericalError covers runtime numerical failure
(non-finite values, divergence, a failed gradient certification). The CLI maps
them to exit codes 1 and 2 respectively.
"""

from __future__ import annotations


class ValidationError(ValueError):
    """Input or configuration violates a documented precondition."""


class NumericalError(RuntimeError):
    """A computation produced non-finite values or failed a numerical check."""
