"""Method evaluation shared by the CLI and the acceptance suite.

A *method* is a named family of selective classifiers over the two scores
``s_r`` and ``s_g``.  :func:`evaluate_method` tunes it under each target set
and computes AUROC, AUPR and OSCR, with one pass over the family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import curves as cv
from .posthoc import AngularFamily, BestPoint, Infeasible, OperatingPoint, ScoredDataset, TuningTargets, scan
from .synth_world import OOD_LABEL, SyntheticSetup, bayes_classifier, conditional_risk, likelihood_ratio, sample

DEFAULT_TARGETS = {
    "tpr-fpr": TuningTargets(0.7, rho_max=0.2),
    "prec-recall": TuningTargets(0.7, kappa_min=0.9),
}


@dataclass(frozen=True)
class Method:
    name: str
    family: object
    description: str


def standard_methods(d: int = 360) -> tuple[Method, ...]:
    return (
        Method("A", "g", "likelihood ratio only (mu = inf)"),
        Method("B", 0.2, "s_r + 0.2 s_g"),
        Method("C", "r", "conditional risk only (mu = 0)"),
        Method("D", AngularFamily(d), f"double score, {d} angles"),
    )


def synthetic_scores(setup: SyntheticSetup, n: int, seed: int, pi: float | None = None) -> ScoredDataset:
    """Sample ``n`` points and score them with the Bayes-optimal ``r_B`` and ``g``.

    The loss column is the 0/1 loss of the Bayes classifier on ID rows.
    """
    if n <= 0:
        raise ValueError("empty dataset")
    batch = sample(setup, n, seed)
    is_ood = batch.label == OOD_LABEL
    h = bayes_classifier(setup, batch.x)
    loss = ((h != batch.label) & ~is_ood).astype(float)
    return ScoredDataset(
        score_r=conditional_risk(setup, batch.x),
        is_ood=is_ood,
        loss=loss,
        score_g=likelihood_ratio(setup, batch.x),
        pi_override=setup.pi if pi is None else pi,
        ids=tuple(str(k) for k in range(n)),
    )


@dataclass
class MethodResult:
    method: Method
    tuned: dict[str, OperatingPoint | Infeasible] = field(default_factory=dict)
    auroc: float | None = None
    aupr: float | None = None
    oscr: float | None = None
    phi_max: float | None = None  # largest TPR with FPR under the TPR-FPR cap

    def selective_risk(self, mode: str) -> float | None:
        r = self.tuned.get(mode)
        return r.selective_risk if isinstance(r, OperatingPoint) else None

    def to_dict(self) -> dict:
        tuned = {}
        for mode, r in self.tuned.items():
            if isinstance(r, Infeasible):
                tuned[mode] = {"selective_risk": "unable", "frontier": r.frontier}
            else:
                tuned[mode] = r.to_dict()
        return {
            "method": self.method.name,
            "description": self.method.description,
            "tuned": tuned,
            "auroc": self.auroc,
            "aupr": self.aupr,
            "oscr": self.oscr,
            "phi_max_at_rho_max": self.phi_max,
        }


def evaluate_method(
    dataset: ScoredDataset,
    method: Method,
    targets: dict[str, TuningTargets],
    weighting: cv.Weighting = "plain",
    grid: np.ndarray | None = None,
) -> MethodResult:
    """Tune ``method`` for each target set and compute its summary curves.

    Curves that need OOD rows are left ``None`` when the dataset has none.
    """
    grid = cv.default_grid() if grid is None else grid
    family = method.family
    has_ood = dataset.n_ood > 0
    best = {mode: BestPoint(t) for mode, t in targets.items()}
    rho_cap = next((t.rho_max for t in targets.values() if t.rho_max is not None), None)
    consumers: list = list(best.values())
    rc = cv.RcEnvelope(rho_cap, grid) if rho_cap is not None else None
    double = isinstance(family, AngularFamily)
    if double:
        if rc is not None:
            consumers.append(rc)
        if has_ood:
            roc, pr, osc = cv.RocEnvelope(grid), cv.PrEnvelope(grid), cv.BestOscr(weighting)
            consumers += [roc, pr, osc]
    scan(dataset, family, consumers)

    result = MethodResult(method)
    for mode, b in best.items():
        try:
            result.tuned[mode] = b.result()
        except Infeasible as exc:
            result.tuned[mode] = exc
    if double:
        result.phi_max = rc.phi_max if rc is not None else None
        if has_ood:
            result.auroc = cv.auroc(cv.CurveSeries("roc", np.column_stack((grid, roc.values))))
            ok = np.isfinite(pr.values)
            result.aupr = cv.aupr(cv.CurveSeries("pr", np.column_stack((grid[ok], pr.values[ok]))))
            result.oscr = osc.area if math.isfinite(osc.area) else None
    else:
        if rho_cap is not None:
            result.phi_max = cv.rc_at_fpr(dataset, family, rho_cap).meta["phi_max"]
        if has_ood:
            result.auroc = cv.auroc(cv.roc_curve(dataset, family))
            result.aupr = cv.aupr(cv.pr_curve(dataset, family))
            result.oscr = cv.oscr(dataset, family, weighting)
    return result


def ranking(results: list[MethodResult], mode: str) -> tuple[list[str], list[str]]:
    """Method names ordered by selective risk, and the names that were unable."""
    ok = [r for r in results if r.selective_risk(mode) is not None]
    ok.sort(key=lambda r: r.selective_risk(mode))
    unable = [r.method.name for r in results if r.selective_risk(mode) is None]
    return [r.method.name for r in ok], unable
