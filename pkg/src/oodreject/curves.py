"""ROC, Precision-Recall, risk-coverage-at-FPR and CCR-FPR curves.

Single-score families produce their curves directly from the sweep points.
Double-score (angular) families produce envelopes on a fixed grid: for each
grid value of one constraint, the best attainable value of the other
quantity over every angle and threshold.  Envelopes are accumulated sweep by
sweep, so several curves can share one pass over the family via
:func:`oodreject.posthoc.scan`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .posthoc import AngularFamily, ScoredDataset, Sweep, family_sweeps, is_double, scan

CurveKind = Literal["roc", "pr", "rc_at_fpr", "ccr_fpr"]
Weighting = Literal["plain", "coverage"]

GRID_POINTS = 201


def default_grid(points: int = GRID_POINTS) -> np.ndarray:
    return np.linspace(0.0, 1.0, points)


@dataclass(frozen=True, eq=False)
class CurveSeries:
    kind: CurveKind
    points: np.ndarray  # (m, 2) array of (x, y), in drawing order
    meta: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    def __len__(self) -> int:
        return len(self.points)

    def to_csv(self) -> str:
        head = " ".join(f"{k}={_fmt_meta(v)}" for k, v in self.meta.items())
        lines = [f"# kind={self.kind} {head}".rstrip(), "x,y"]
        lines += [f"{float(x)!r},{float(y)!r}" for x, y in self.points]
        return "\n".join(lines) + "\n"


def _fmt_meta(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v).replace(" ", "")


def family_label(family) -> str:
    if isinstance(family, AngularFamily):
        if family.alphas is not None:
            return f"angular(alphas={len(family.alphas)})"
        return f"angular(d={family.d})"
    if isinstance(family, str):
        return {"r": "score_r", "g": "score_g"}.get(family, family)
    if np.isscalar(family):
        return f"mu={float(family)!r}"
    return "explicit"


def _pairs(x, y) -> np.ndarray:
    return np.column_stack((np.asarray(x, dtype=float), np.asarray(y, dtype=float)))


def trapezoid_area(series: CurveSeries) -> float:
    """Trapezoidal area under the curve, points sorted by ``(x, y)``."""
    if len(series) < 2:
        return 0.0
    order = np.lexsort((series.y, series.x))
    x, y = series.x[order], series.y[order]
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) * 0.5))


def _require_ood(dataset: ScoredDataset) -> None:
    if dataset.n_ood == 0:
        raise ValueError("dataset has no OOD rows; FPR-based curves are undefined")


# --------------------------------------------------------------------------
# envelope accumulators


class RocEnvelope:
    """Max TPR subject to ``FPR <= rho_max`` for each grid ``rho_max``."""

    def __init__(self, grid: np.ndarray):
        self.grid = np.asarray(grid, dtype=float)
        self.values = np.zeros(len(self.grid))

    def update(self, sweep: Sweep) -> None:
        # tpr and fpr are both nondecreasing along a sweep
        idx = np.searchsorted(sweep.fpr, self.grid, side="right") - 1
        self.values = np.maximum(self.values, sweep.tpr[idx])


class PrEnvelope:
    """Max precision subject to ``TPR >= phi_min`` (TPR > 0) per grid ``phi_min``."""

    def __init__(self, grid: np.ndarray):
        self.grid = np.asarray(grid, dtype=float)
        self.values = np.full(len(self.grid), -np.inf)

    def update(self, sweep: Sweep) -> None:
        prec = np.where(sweep.tpr > 0, np.nan_to_num(sweep.precision, nan=-np.inf), -np.inf)
        best_after = np.maximum.accumulate(prec[::-1])[::-1]
        idx = np.searchsorted(sweep.tpr, self.grid, side="left")
        ok = idx < len(prec)
        vals = np.full(len(self.grid), -np.inf)
        vals[ok] = best_after[idx[ok]]
        self.values = np.maximum(self.values, vals)


class RcEnvelope:
    """Min selective risk subject to ``FPR <= rho_max`` and ``TPR >= phi_min``."""

    def __init__(self, rho_max: float, grid: np.ndarray):
        self.rho_max = rho_max
        self.grid = np.asarray(grid, dtype=float)
        self.values = np.full(len(self.grid), np.inf)
        self.phi_max = None

    def update(self, sweep: Sweep) -> None:
        ok = (sweep.fpr <= self.rho_max) & (sweep.accepted_id > 0)
        if not ok.any():
            return
        top = float(sweep.tpr[ok].max())
        self.phi_max = top if self.phi_max is None else max(self.phi_max, top)
        risk = np.where(ok, sweep.risk, np.inf)
        best_after = np.minimum.accumulate(risk[::-1])[::-1]
        idx = np.searchsorted(sweep.tpr, self.grid, side="left")
        valid = idx < len(risk)
        vals = np.full(len(self.grid), np.inf)
        vals[valid] = best_after[idx[valid]]
        self.values = np.minimum(self.values, vals)


def ccr_points(sweep: Sweep, weighting: Weighting = "plain") -> np.ndarray:
    """(FPR, CCR) points of one sweep.

    ``plain`` uses ``CCR = 1 - R^S_n`` on accepted ID samples and skips points
    with nothing accepted; ``coverage`` uses accepted-correct ID over all ID
    and starts at the accept-nothing point.
    """
    if weighting == "plain":
        ok = sweep.accepted_id > 0
        return _pairs(sweep.fpr[ok], sweep.ccr[ok])
    if weighting == "coverage":
        return _pairs(sweep.fpr, sweep.ccr_weighted)
    raise ValueError(f"unknown CCR weighting {weighting!r}")


class BestOscr:
    """Largest OSCR among the sweeps seen (first wins on ties)."""

    def __init__(self, weighting: Weighting = "plain"):
        self.weighting = weighting
        self.area = -np.inf
        self.points: np.ndarray | None = None
        self.alpha: float | None = None
        self.mu: float | None = None

    def update(self, sweep: Sweep) -> None:
        pts = ccr_points(sweep, self.weighting)
        area = trapezoid_area(CurveSeries("ccr_fpr", pts))
        if area > self.area:
            self.area, self.points = area, pts
            self.alpha, self.mu = sweep.alpha, sweep.mu


# --------------------------------------------------------------------------
# public curves


def _single_sweep(dataset: ScoredDataset, family) -> Sweep:
    sweeps = list(family_sweeps(dataset, family))
    if len(sweeps) != 1:
        raise ValueError("expected a single-score family")
    return sweeps[0]


def roc_curve(dataset: ScoredDataset, family="g", grid: np.ndarray | None = None) -> CurveSeries:
    """ROC points ``(FPR, TPR)``.

    A single score yields every sweep point.  A double-score family, or any
    family when ``grid`` is given, yields the max-TPR envelope on the FPR grid.
    """
    _require_ood(dataset)
    meta = {"family": family_label(family)}
    if grid is None and not is_double(family):
        sw = _single_sweep(dataset, family)
        return CurveSeries("roc", _pairs(sw.fpr, sw.tpr), meta)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    env = RocEnvelope(grid)
    scan(dataset, family, [env])
    return CurveSeries("roc", _pairs(grid, env.values), meta | {"grid": len(grid)})


def auroc(series: CurveSeries) -> float:
    if series.kind != "roc":
        raise ValueError("AUROC needs a ROC series")
    return trapezoid_area(series)


def pr_curve(
    dataset: ScoredDataset, family="g", pi: float | None = None, grid: np.ndarray | None = None
) -> CurveSeries:
    """Precision-Recall points ``(TPR, precision)``; points with TPR 0 are skipped."""
    if pi is not None:
        dataset = dataset.with_pi(pi)
    meta = {"family": family_label(family), "pi": float(dataset.pi)}
    if grid is None and not is_double(family):
        sw = _single_sweep(dataset, family)
        ok = sw.tpr > 0
        return CurveSeries("pr", _pairs(sw.tpr[ok], sw.precision[ok]), meta)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    env = PrEnvelope(grid)
    scan(dataset, family, [env])
    ok = np.isfinite(env.values)
    return CurveSeries("pr", _pairs(grid[ok], env.values[ok]), meta | {"grid": len(grid)})


def aupr(series: CurveSeries) -> float:
    """Trapezoidal area, with the curve held flat from its first recall back to 0."""
    if series.kind != "pr":
        raise ValueError("AUPR needs a PR series")
    if len(series) == 0:
        return 0.0
    x0 = float(series.x.min())
    if x0 > 0:
        y0 = float(series.y[series.x == x0].max())
        series = CurveSeries("pr", np.vstack(([[0.0, y0]], series.points)), series.meta)
    return trapezoid_area(series)


def rc_at_fpr(
    dataset: ScoredDataset, family, rho_max: float, grid: np.ndarray | None = None
) -> CurveSeries:
    """Risk-coverage curve under the FPR cap ``rho_max``.

    Points are ``(TPR, R^S_n)``.  For a single score these are the sweep
    points with ``FPR <= rho_max``; for a double-score family, the minimal
    risk at each grid coverage ``phi_min``.  ``meta["phi_max"]`` is the largest
    coverage attainable under the cap (``None`` if nothing is feasible).
    """
    if not 0.0 <= rho_max <= 1.0:
        raise ValueError("rho_max must lie in [0, 1]")
    meta = {"family": family_label(family), "rho_max": float(rho_max)}
    if grid is None and not is_double(family):
        sw = _single_sweep(dataset, family)
        ok = (sw.fpr <= rho_max) & (sw.accepted_id > 0)
        phi_max = float(sw.tpr[ok].max()) if ok.any() else None
        return CurveSeries("rc_at_fpr", _pairs(sw.tpr[ok], sw.risk[ok]), meta | {"phi_max": phi_max})
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    env = RcEnvelope(rho_max, grid)
    scan(dataset, family, [env])
    ok = np.isfinite(env.values)
    return CurveSeries(
        "rc_at_fpr",
        _pairs(grid[ok], env.values[ok]),
        meta | {"phi_max": env.phi_max, "grid": len(grid)},
    )


def ccr_fpr_curve(dataset: ScoredDataset, family, weighting: Weighting = "plain") -> CurveSeries:
    """CCR versus FPR; for a family with several sweeps, the one with best OSCR."""
    _require_ood(dataset)
    best = BestOscr(weighting)
    scan(dataset, family, [best])
    meta = {"family": family_label(family), "weighting": weighting}
    if best.alpha is not None:
        meta["alpha"] = best.alpha
    return CurveSeries("ccr_fpr", best.points, meta)


def oscr(dataset: ScoredDataset, family="r", weighting: Weighting = "plain") -> float:
    """Area under the CCR-FPR curve.

    With ``plain`` weighting CCR is ``1 - R^S_n`` on accepted ID samples.  A
    double-score family reports its best angle.
    """
    return trapezoid_area(ccr_fpr_curve(dataset, family, weighting))


def rank_sum_auroc(id_scores, ood_scores) -> float:
    """``P(s_ID < s_OOD) + P(s_ID = s_OOD) / 2`` via midranks."""
    id_scores = np.asarray(id_scores, dtype=float)
    ood_scores = np.asarray(ood_scores, dtype=float)
    both = np.concatenate((id_scores, ood_scores))
    order = np.argsort(both, kind="stable")
    s = both[order]
    ranks = np.empty(len(both))
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[j + 1] == s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    n_o = len(ood_scores)
    n_i = len(id_scores)
    u_ood = ranks[n_i:].sum() - n_o * (n_o + 1) / 2.0
    return float(u_ood / (n_i * n_o)) if n_i and n_o else math.nan
