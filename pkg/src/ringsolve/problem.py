"""Linear problem representation, range-safety scaling, and a direct solver.

The analog solver accepts input voltages only inside [-0.5, 0.5] V, and its
node outputs must stay inside the same window.  Scaling the system matrix by
a factor no smaller than the infinity norm of its inverse guarantees the
outputs respect the window whenever the inputs do; this module computes the
norms, the condition number, and the scaled problem, and provides an exact
partial-pivot elimination solver used everywhere as the verification oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import IO, Union

import numpy as np

# Hardware input/output window, volts.
RANGE_LIMIT = 0.5

# A pivot below PIVOT_RTOL * ||A||_inf is treated as singular.  The solver
# dynamics have no equilibrium for singular systems, so this is a hard error.
PIVOT_RTOL = 1e-12

# Default heuristic condition-number budget for ScalePolicy.ESTIMATE.
DEFAULT_ESTIMATE_C = 1e3


class SingularMatrix(Exception):
    """Elimination met a pivot below the singularity tolerance."""


class RangeViolation(ValueError):
    """An input vector entry falls outside the [-0.5, 0.5] V window."""


class ScalePolicy(Enum):
    """How the scaling factor is chosen.

    EXACT computes ||A^-1||_inf and uses max(||A^-1||_inf, 1), which provably
    keeps the solution inside the output window.  ESTIMATE avoids the inverse
    and uses C / ||A||_inf, trusting a condition-number budget C that holds
    for typical well-conditioned matrices.
    """

    EXACT = "exact"
    ESTIMATE = "estimate"


@dataclass(frozen=True)
class LinearProblem:
    """A dense square system A x = b.

    ``a`` is dimensionless, ``b`` is in volts.  Arrays are copied and frozen
    so problems can be shared freely across threads.
    """

    a: np.ndarray
    b: np.ndarray
    symmetric: bool = False

    def __post_init__(self) -> None:
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"matrix must be square, got shape {a.shape}")
        if a.shape[0] < 1:
            raise ValueError("dimension must be at least 1")
        if b.shape[0] != a.shape[0]:
            raise ValueError(
                f"right-hand side has length {b.shape[0]}, expected {a.shape[0]}"
            )
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError("matrix and right-hand side entries must be finite")
        if self.symmetric and not np.array_equal(a, a.T):
            raise ValueError("symmetric flag set but matrix is not symmetric")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class ScaledProblem:
    """A problem together with its range-safe scaling.

    ``scaled_a = original.a * factor_scale``; solving ``scaled_a @ y = b``
    and multiplying y by ``factor_scale`` recovers the original solution.
    Under ScalePolicy.EXACT the factor satisfies
    ``factor_scale >= a_inv_inf_norm`` so that max|y| <= 0.5 whenever
    max|b| <= 0.5; under ESTIMATE that guarantee holds only when the true
    condition number stays below the configured budget.
    """

    original: LinearProblem
    scaled_a: np.ndarray
    factor_scale: float
    a_inf_norm: float
    a_inv_inf_norm: float
    kappa_inf: float

    def __post_init__(self) -> None:
        scaled = np.array(self.scaled_a, dtype=float)
        scaled.setflags(write=False)
        object.__setattr__(self, "scaled_a", scaled)


def inf_norm(a: np.ndarray) -> float:
    """Maximum absolute row sum.  O(n^2)."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    return float(np.abs(a).sum(axis=1).max())


def _lu_factor(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """LU factorization with partial pivoting.

    Returns (lu, perm) where lu packs the unit-lower and upper factors and
    perm maps logical rows to original rows.  Raises SingularMatrix when the
    best available pivot falls below PIVOT_RTOL * ||A||_inf.
    """
    lu = np.array(a, dtype=float)
    n = lu.shape[0]
    perm = np.arange(n)
    tol = PIVOT_RTOL * inf_norm(lu)
    if tol == 0.0:
        raise SingularMatrix("zero matrix")
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) < tol:
            raise SingularMatrix(
                f"pivot {lu[p, k]:.3e} below tolerance {tol:.3e} at column {k}"
            )
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1 :, k] /= lu[k, k]
        if k + 1 < n:
            lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    return lu, perm


def _lu_solve(lu: np.ndarray, perm: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve using a factorization from _lu_factor.  rhs may be a matrix."""
    n = lu.shape[0]
    x = np.array(rhs, dtype=float)
    one_d = x.ndim == 1
    if one_d:
        x = x.reshape(-1, 1)
    x = x[perm]
    for k in range(n):  # forward, unit lower triangle
        x[k + 1 :] -= np.outer(lu[k + 1 :, k], x[k])
    for k in range(n - 1, -1, -1):  # backward
        x[k] /= lu[k, k]
        if k > 0:
            x[:k] -= np.outer(lu[:k, k], x[k])
    return x[:, 0] if one_d else x


def solve_dense(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Partial-pivot elimination solve of a raw (a, b) pair."""
    lu, perm = _lu_factor(np.asarray(a, dtype=float))
    return _lu_solve(lu, perm, np.asarray(b, dtype=float))


def matrix_inverse(a: np.ndarray) -> np.ndarray:
    """Explicit inverse via elimination.  Intended for desk scale (n <= 64)."""
    a = np.asarray(a, dtype=float)
    lu, perm = _lu_factor(a)
    return _lu_solve(lu, perm, np.eye(a.shape[0]))


def inv_inf_norm(a: np.ndarray) -> float:
    """||A^-1||_inf from the explicit inverse.

    The O(n^3) inversion is irrelevant at desk scale; the norm evaluation
    itself stays O(n^2).  Raises SingularMatrix for singular input.
    """
    return inf_norm(matrix_inverse(a))


def direct_solve_oracle(p: LinearProblem) -> np.ndarray:
    """Exact reference solution of p, used to verify the dynamic solver."""
    return solve_dense(p.a, p.b)


def scale_problem(
    p: LinearProblem,
    policy: ScalePolicy = ScalePolicy.EXACT,
    estimate_c: float = DEFAULT_ESTIMATE_C,
) -> ScaledProblem:
    """Scale the matrix so the solution respects the output window.

    EXACT uses factor = max(||A^-1||_inf, 1); the floor of 1 avoids shrinking
    the matrix (and hence the loop bandwidth) when no scaling is needed.
    ESTIMATE uses factor = estimate_c / ||A||_inf.  Both policies record the
    exact norms and condition number for reporting.

    Raises RangeViolation when any |b_i| > 0.5 and SingularMatrix for a
    singular matrix.
    """
    if float(np.abs(p.b).max()) > RANGE_LIMIT:
        raise RangeViolation(
            f"max |b_i| = {np.abs(p.b).max():.6g} exceeds {RANGE_LIMIT} V"
        )
    a_norm = inf_norm(p.a)
    inv_norm = inv_inf_norm(p.a)
    if policy is ScalePolicy.EXACT:
        factor = max(inv_norm, 1.0)
    elif policy is ScalePolicy.ESTIMATE:
        if estimate_c <= 0:
            raise ValueError("estimate_c must be positive")
        factor = estimate_c / a_norm
    else:  # pragma: no cover - exhaustive enum
        raise ValueError(f"unknown policy {policy!r}")
    return ScaledProblem(
        original=p,
        scaled_a=p.a * factor,
        factor_scale=factor,
        a_inf_norm=a_norm,
        a_inv_inf_norm=inv_norm,
        kappa_inf=a_norm * inv_norm,
    )


def unscale_solution(sp: ScaledProblem, y: np.ndarray) -> np.ndarray:
    """Map a solution of the scaled system back to the original one."""
    y = np.asarray(y, dtype=float)
    if y.shape != (sp.original.n,):
        raise ValueError(f"expected shape ({sp.original.n},), got {y.shape}")
    return y * sp.factor_scale


def problem_from_dict(doc: dict) -> LinearProblem:
    """Build a problem from the documented JSON structure."""
    if "a" not in doc or "b" not in doc:
        raise ValueError('problem document must contain keys "a" and "b"')
    return LinearProblem(
        a=np.array(doc["a"], dtype=float),
        b=np.array(doc["b"], dtype=float),
        symmetric=bool(doc.get("symmetric", False)),
    )


def load_problem(source: Union[str, IO[str]]) -> LinearProblem:
    """Load a problem from a JSON file path or open text stream."""
    if hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    return problem_from_dict(doc)
