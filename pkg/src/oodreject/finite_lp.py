"""Bounded TPR-FPR model on a finite input space, solved as a linear program.

For finite ``X`` the optimal (possibly randomized) acceptance vector solves

    min  sum_x risk(x) c(x) / phi_min
    s.t. sum_x p_id(x) c(x)  = phi_min
         sum_x p_ood(x) c(x) <= rho_max
         0 <= c(x) <= 1

The coverage constraint is an equality because shrinking an over-covering
solution never increases the objective.  The program has two rows, so a
small bounded-variable simplex solves it exactly enough; duals of the final
basis give the threshold ``lam`` and multiplier ``mu`` of the optimal score
``(risk(x) + mu * p_ood(x)) / p_id(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

TOL = 1e-12


class StructureViolation(AssertionError):
    def __init__(self, message: str, indices: Sequence[int]):
        super().__init__(f"{message}: items {list(indices)}")
        self.indices = list(indices)


@dataclass(frozen=True, eq=False)
class LpInstance:
    """Items with ID mass, OOD mass and risk mass ``sum_y p(x,y) loss(y, h(x))``.

    ``p_id`` and ``risk_mass`` are divided by ``sum(p_id)`` on construction so
    ``phi_min`` is read on the ID-conditional scale; ``scale`` keeps the
    original total.
    """

    p_id: np.ndarray
    p_ood: np.ndarray
    risk_mass: np.ndarray
    phi_min: float
    rho_max: float
    scale: float = field(init=False)

    def __post_init__(self) -> None:
        p_id = np.asarray(self.p_id, dtype=float)
        p_ood = np.asarray(self.p_ood, dtype=float)
        risk = np.asarray(self.risk_mass, dtype=float)
        if not (p_id.shape == p_ood.shape == risk.shape) or p_id.ndim != 1:
            raise ValueError("p_id, p_ood and risk_mass must be equal-length vectors")
        if np.any(p_id < 0) or np.any(p_ood < 0) or np.any(risk < 0):
            raise ValueError("masses must be nonnegative")
        total = float(p_id.sum())
        if not total > 0:
            raise ValueError("total ID mass must be positive")
        if not 0.0 < self.phi_min <= 1.0 + 1e-12:
            raise ValueError(f"phi_min must lie in (0, 1] after normalisation, got {self.phi_min}")
        if self.rho_max < 0:
            raise ValueError("rho_max must be nonnegative")
        object.__setattr__(self, "scale", total)
        object.__setattr__(self, "p_id", p_id / total)
        object.__setattr__(self, "p_ood", p_ood)
        object.__setattr__(self, "risk_mass", risk / total)

    def __len__(self) -> int:
        return len(self.p_id)

    def objective(self, c) -> float:
        return float(np.dot(self.risk_mass, c)) / self.phi_min


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: Literal["optimal", "infeasible"]
    acceptance: np.ndarray | None
    objective: float | None
    duals: tuple[float, float] | None = None  # (coverage row, FPR row)
    phi_min: float = 1.0

    @property
    def lam(self) -> float | None:
        return None if self.duals is None else self.phi_min * self.duals[0]

    @property
    def mu(self) -> float | None:
        return None if self.duals is None else -self.phi_min * self.duals[1]

    def fractional(self, tol: float = 1e-9) -> np.ndarray:
        c = self.acceptance
        return np.flatnonzero((c > tol) & (c < 1 - tol))


# --------------------------------------------------------------------------
# bounded-variable primal simplex


class _Simplex:
    """Primal simplex for ``min cost.x, A x = b, lo <= x <= up`` with Bland's rule."""

    def __init__(self, A, b, lo, up, basis, at_upper):
        self.A = A
        self.b = b
        self.lo = lo
        self.up = up
        self.basis = list(basis)
        self.at_upper = at_upper  # bool per variable, meaningful for nonbasic ones

    def values(self) -> np.ndarray:
        x = np.where(self.at_upper, self.up, self.lo).astype(float)
        x[self.basis] = 0.0
        rhs = self.b - self.A @ x
        x[self.basis] = np.linalg.solve(self.A[:, self.basis], rhs)
        return x

    def duals(self, cost: np.ndarray) -> np.ndarray:
        B = self.A[:, self.basis]
        return np.linalg.solve(B.T, cost[self.basis])

    def run(self, cost: np.ndarray, max_iter: int = 10_000) -> None:
        n = self.A.shape[1]
        for _ in range(max_iter):
            x = self.values()
            y = self.duals(cost)
            d = cost - self.A.T @ y
            basic = np.zeros(n, dtype=bool)
            basic[self.basis] = True
            entering = None
            for j in range(n):
                if basic[j] or self.up[j] - self.lo[j] <= TOL:
                    continue
                if (not self.at_upper[j] and d[j] < -TOL) or (self.at_upper[j] and d[j] > TOL):
                    entering = j
                    break
            if entering is None:
                return
            j = entering
            sign = -1.0 if self.at_upper[j] else 1.0
            w = np.linalg.solve(self.A[:, self.basis], self.A[:, j])
            # x_B(t) = x_B - sign * t * w
            best_t = self.up[j] - self.lo[j]
            leave = None  # None means bound flip of the entering variable
            leave_key = j
            for pos, bv in enumerate(self.basis):
                rate = sign * w[pos]
                if rate > TOL:
                    t = (x[bv] - self.lo[bv]) / rate
                elif rate < -TOL and math.isfinite(self.up[bv]):
                    t = (self.up[bv] - x[bv]) / -rate
                else:
                    continue
                t = max(t, 0.0)
                if t < best_t - TOL or (abs(t - best_t) <= TOL and bv < leave_key):
                    best_t, leave, leave_key = t, pos, bv
            if not math.isfinite(best_t):
                raise RuntimeError("unbounded linear program")
            if leave is None:
                self.at_upper[j] = not self.at_upper[j]
                continue
            bv = self.basis[leave]
            rate = sign * w[leave]
            self.at_upper[bv] = rate < 0  # hit its upper bound when increasing
            self.basis[leave] = j
            self.at_upper[j] = False
        raise RuntimeError("simplex iteration limit reached")


def solve(instance: LpInstance, coverage: Literal["equal", "at_least"] = "equal") -> LpSolution:
    """Vertex-optimal acceptance vector, or ``status="infeasible"``.

    ``coverage="at_least"`` relaxes the coverage row to ``>=`` (the
    objective keeps the fixed ``1 / phi_min`` factor).
    """
    m = len(instance)
    a, bvec, r = instance.p_id, instance.p_ood, instance.risk_mass
    phi, rho = instance.phi_min, instance.rho_max
    # columns: items | FPR slack | [coverage surplus] | coverage artificial
    cols = [np.vstack((a, bvec)), np.array([[0.0], [1.0]])]
    if coverage == "at_least":
        cols.append(np.array([[-1.0], [0.0]]))
    elif coverage != "equal":
        raise ValueError(f"unknown coverage mode {coverage!r}")
    cols.append(np.array([[1.0], [0.0]]))
    A = np.hstack(cols)
    n = A.shape[1]
    art = n - 1
    slack = m
    lo = np.zeros(n)
    up = np.concatenate((np.ones(m), np.full(n - m, np.inf)))
    simplex = _Simplex(A, np.array([phi, rho]), lo, up, [art, slack], np.zeros(n, dtype=bool))

    phase1 = np.zeros(n)
    phase1[art] = 1.0
    simplex.run(phase1)
    x = simplex.values()
    if x[art] > 1e-10:
        return LpSolution("infeasible", None, None)

    up[art] = 0.0  # artificial is pinned at zero from here on
    cost = np.zeros(n)
    cost[:m] = r / phi
    simplex.run(cost)
    x = simplex.values()
    c = np.clip(x[:m], 0.0, 1.0)
    y = simplex.duals(cost)
    return LpSolution("optimal", c, instance.objective(c), (float(y[0]), float(y[1])), phi)


def prec_recall_rho_max(phi_min: float, kappa_min: float, pi: float) -> float:
    """FPR cap equivalent to the precision floor ``kappa_min`` at coverage ``phi_min``."""
    if not (0 < pi < 1 and 0 < kappa_min <= 1):
        raise ValueError("need 0 < pi < 1 and 0 < kappa_min <= 1")
    return (1.0 - pi) * (1.0 - kappa_min) / (pi * kappa_min) * phi_min


# --------------------------------------------------------------------------
# structure check


@dataclass(frozen=True)
class BandReport:
    lam: float
    mu: float
    fractional: tuple[int, ...]
    fractional_ratios: tuple[float, ...]  # distinct p_ood / p_id among fractional items
    consistent: bool = True

    def summary(self) -> str:
        return f"consistent, fractional = {len(self.fractional)}"

    def to_dict(self) -> dict:
        return {
            "consistent": self.consistent,
            "lambda": self.lam,
            "mu": self.mu,
            "fractional": list(self.fractional),
            "fractional_ratios": list(self.fractional_ratios),
        }


def verify_band_structure(instance: LpInstance, solution: LpSolution, tol: float = 1e-7) -> BandReport:
    """Check the solution is a threshold rule on ``(risk + mu p_ood) / p_id``.

    Items scoring below ``lam`` must be fully accepted, items above fully
    rejected, and fractional items must sit on the boundary.  Raises
    :class:`StructureViolation` otherwise.
    """
    if solution.status != "optimal":
        raise ValueError("structure check needs an optimal solution")
    lam, mu = solution.lam, solution.mu
    c = solution.acceptance
    a, b, r = instance.p_id, instance.p_ood, instance.risk_mass
    # reduced cost scaled by phi_min: r - lam a + mu b
    red = r - lam * a + mu * b
    scale = 1.0 + abs(lam) + abs(mu)
    frac = solution.fractional()
    below = np.flatnonzero((red < -tol * scale) & (c < 1 - 1e-9))
    if len(below):
        raise StructureViolation("items below the threshold are not fully accepted", below)
    above = np.flatnonzero((red > tol * scale) & (c > 1e-9))
    if len(above):
        raise StructureViolation("items above the threshold are not fully rejected", above)
    off = [int(i) for i in frac if abs(red[i]) > tol * scale]
    if off:
        raise StructureViolation("fractional items off the boundary", off)
    with np.errstate(divide="ignore"):
        ratios = np.where(a[frac] > 0, b[frac] / np.where(a[frac] > 0, a[frac], 1), np.inf)
    distinct = tuple(sorted(set(np.round(ratios, 12).tolist())))
    if len(distinct) > 2:
        raise StructureViolation("fractional items span more than two likelihood ratios", frac)
    return BandReport(float(lam), float(mu), tuple(int(i) for i in frac), distinct)
