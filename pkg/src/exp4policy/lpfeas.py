"""Slack-maximising feasibility LP for signed half-space systems.

A cell of a central hyperplane arrangement is the set of coefficient vectors
``beta`` with ``sign_i * (row_i . beta) > 0`` for every constraint ``i``.  The
solver writes ``beta = beta_plus - beta_minus`` and maximises a slack ``r`` in
``[0, 1]`` subject to

    sign=+ :  row . beta_minus - row . beta_plus + r * ||row|| <= 0
    sign=- :  row . beta_plus - row . beta_minus + r * ||row|| <= 0

with ``0 <= beta_plus, beta_minus <= box`` componentwise.  The optimum is a
pseudo-Chebyshev centre: a ball of radius ``r_star`` around the witness lies
inside the cell (clipped by the box).

The LP is solved by a small dense bounded-variable primal simplex using Bland's
rule, so no external LP library is involved.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_BOX = 1e3
EPS_R = 1e-7
PIVOT_TOL = 1e-10


class Status(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class SignedConstraint:
    """One half-space ``sign * (row . beta) > 0`` with its precomputed norm."""

    row: np.ndarray
    sign: int
    norm: float

    def __post_init__(self):
        row = np.asarray(self.row, dtype=float)
        row.setflags(write=False)
        object.__setattr__(self, "row", row)
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign!r}")
        if not self.norm > 0:
            raise ValueError("constraint norm must be positive")
        if abs(self.norm - float(np.linalg.norm(row))) > 1e-12 * max(1.0, self.norm):
            raise ValueError("norm does not match the Euclidean norm of row")

    @classmethod
    def from_row(cls, row, sign) -> "SignedConstraint":
        if sign in ("+", "-"):
            sign = 1 if sign == "+" else -1
        row = np.asarray(row, dtype=float)
        return cls(row=row, sign=int(sign), norm=float(np.linalg.norm(row)))


@dataclass(frozen=True)
class FeasibilityResult:
    r_star: float
    witness: np.ndarray
    status: Status
    iterations: int = 0

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE


def maximize_bounded(c, A, b, upper, max_iter=10_000, tol=PIVOT_TOL):
    """Maximise ``c . x`` subject to ``A x <= b`` and ``0 <= x <= upper``.

    Requires ``b >= 0`` so that the all-slack basis with ``x = 0`` is feasible
    (no phase one).  Entering and leaving variables follow Bland's rule, which
    rules out cycling on the heavily degenerate systems produced here.

    Returns ``(converged, x, value, iterations)``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    if np.any(b < 0):
        raise ValueError("maximize_bounded requires b >= 0")

    tab = np.hstack([A, np.eye(m)])
    ub = np.concatenate([np.asarray(upper, dtype=float), np.full(m, np.inf)])
    basis = np.arange(n, n + m)
    is_basic = np.zeros(n + m, dtype=bool)
    is_basic[basis] = True
    at_upper = np.zeros(n + m, dtype=bool)
    xb = b.copy()
    red = np.concatenate([c, np.zeros(m)])

    converged = False
    it = 0
    ub_finite = np.isfinite(ub)
    ratios = np.empty(m)
    for it in range(1, max_iter + 1):
        eligible = ~is_basic & np.where(at_upper, red < -tol, red > tol)
        j = int(eligible.argmax())
        if not eligible[j]:
            converged = True
            break
        direction = -1.0 if at_upper[j] else 1.0
        alpha = tab[:, j] * direction

        # basic variables moving toward their lower bound (0) or upper bound
        ratios.fill(np.inf)
        dec = alpha > tol
        ratios[dec] = np.maximum(xb[dec], 0.0) / alpha[dec]
        fin = (alpha < -tol) & ub_finite[basis]
        if fin.any():
            ratios[fin] = np.maximum(ub[basis][fin] - xb[fin], 0.0) / -alpha[fin]
        theta_basic = ratios.min() if m else np.inf
        theta_flip = ub[j]

        if theta_basic == np.inf and theta_flip == np.inf:
            # unbounded direction; cannot happen with finite structural bounds
            raise RuntimeError("LP is unbounded")

        if theta_flip <= theta_basic:
            xb -= theta_flip * alpha
            at_upper[j] = not at_upper[j]
            continue

        ties = np.flatnonzero(ratios <= theta_basic + tol)
        r = ties[np.argmin(basis[ties])]
        leaving_to_upper = alpha[r] < 0
        entering_value = theta_basic if direction > 0 else ub[j] - theta_basic
        xb -= theta_basic * alpha
        xb[r] = entering_value

        pivot_row = tab[r] / tab[r, j]
        col = tab[:, j].copy()
        col[r] = 0.0
        tab -= col[:, None] * pivot_row
        tab[r] = pivot_row
        red -= red[j] * pivot_row

        old = basis[r]
        is_basic[old] = False
        at_upper[old] = leaving_to_upper
        basis[r] = j
        is_basic[j] = True
        at_upper[j] = False

    x = np.where(at_upper, ub, 0.0)
    x[basis] = xb
    x = np.clip(x[:n], 0.0, np.asarray(upper, dtype=float))
    return converged, x, float(c @ x), it


def solve_rows(signed_rows, norms, box=DEFAULT_BOX, eps_r=EPS_R, max_iter=10_000):
    """Array form of :func:`solve_feasibility`.

    ``signed_rows[i]`` is ``sign_i * row_i``; ``norms[i]`` is ``||row_i||``.
    """
    S = np.atleast_2d(np.asarray(signed_rows, dtype=float))
    norms = np.asarray(norms, dtype=float)
    m, d = S.shape
    if m == 0:
        raise ValueError("at least one constraint is required")
    if box <= 0:
        raise ValueError("box bound must be positive")
    # variables: beta_plus (d), beta_minus (d), r
    A = np.hstack([-S, S, norms[:, None]])
    c = np.zeros(2 * d + 1)
    c[-1] = 1.0
    upper = np.concatenate([np.full(2 * d, float(box)), [1.0]])
    converged, x, r_star, iters = maximize_bounded(c, A, np.zeros(m), upper, max_iter=max_iter)
    witness = x[:d] - x[d : 2 * d]
    if not converged:
        logger.warning("feasibility LP hit the iteration cap (%d) with %d constraints", max_iter, m)
        return FeasibilityResult(r_star, witness, Status.DEGENERATE, iters)
    status = Status.FEASIBLE if r_star > eps_r else Status.INFEASIBLE
    return FeasibilityResult(r_star, witness, status, iters)


def solve_feasibility(
    constraints: Sequence[SignedConstraint],
    box: float = DEFAULT_BOX,
    eps_r: float = EPS_R,
    max_iter: int = 10_000,
) -> FeasibilityResult:
    """Maximal slack and pseudo-Chebyshev witness for a signed system."""
    if len(constraints) == 0:
        raise ValueError("at least one constraint is required")
    dims = {c.row.shape[0] for c in constraints}
    if len(dims) != 1:
        raise ValueError(f"constraint rows have mixed lengths {sorted(dims)}")
    S = np.array([c.sign * c.row for c in constraints])
    norms = np.array([c.norm for c in constraints])
    return solve_rows(S, norms, box=box, eps_r=eps_r, max_iter=max_iter)
