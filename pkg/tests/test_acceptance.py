"""One check per acceptance criterion; each prints a single PASS/FAIL line."""

from __future__ import annotations

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oodreject import curves as cv
from oodreject.benchmark import DEFAULT_TARGETS, evaluate_method, ranking, standard_methods, synthetic_scores
from oodreject.finite_lp import solve, verify_band_structure
from oodreject.posthoc import (
    AngularFamily,
    Infeasible,
    ScoredDataset,
    TuningTargets,
    empirical_point,
    scan,
    sweep_single_score,
    tune_prec_recall,
    tune_tpr_fpr,
)
from oodreject.reject_models import MU_INF, SelectiveRule, cost_score, theoretical_report
from oodreject.synth_world import conditional_risk, default_setup
from test_finite_lp import enumerate_vertices, random_instance
from test_posthoc import brute_force_points, same_point


def report(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def near(value, target, tol):
    return value is not None and abs(value - target) <= tol


@pytest.fixture(scope="module")
def table():
    t0 = time.perf_counter()
    ds = synthetic_scores(default_setup(), 200_000, 1)
    results = {m.name: evaluate_method(ds, m, DEFAULT_TARGETS) for m in standard_methods(360)}
    return ds, results, time.perf_counter() - t0


def test_criterion_1_table(table):
    _, res, seconds = table
    tf, pr = "tpr-fpr", "prec-recall"
    checks = []
    for name, want in (("A", 0.157), ("B", 0.143), ("D", 0.133)):
        got = res[name].selective_risk(tf)
        checks.append((f"R^S {tf} {name}", got, want, 0.010))
    checks.append((f"R^S {pr} D", res["D"].selective_risk(pr), 0.129, 0.010))
    for name in ("A", "B"):
        checks.append((f"R^S {pr} {name}", res[name].selective_risk(pr), res[name].selective_risk(tf), 0.002))
    for metric, wants in (
        ("auroc", (0.88, 0.86, 0.76, 0.88)),
        ("aupr", (0.96, 0.95, 0.92, 0.96)),
        ("oscr", (0.82, 0.83, 0.86, 0.86)),
    ):
        for name, want in zip("ABCD", wants):
            checks.append((f"{metric} {name}", getattr(res[name], metric), want, 0.01))
    bad = [c for c in checks if not near(c[1], c[2], c[3])]
    c_unable = isinstance(res["C"].tuned[tf], Infeasible) and "C" in ranking(list(res.values()), tf)[1]
    fast = seconds < 120
    summary = ", ".join(f"{k}={v:.4f}" for k, v, _, _ in checks[:4])
    detail = f"{len(checks) - len(bad)}/{len(checks)} values in tolerance ({summary}); C unable={c_unable}; {seconds:.1f}s"
    if bad:
        detail += "; off: " + ", ".join(f"{k}={v} want {w}+-{t}" for k, v, w, t in bad)
    report(1, not bad and c_unable and fast, detail)


def _random_dataset(rng):
    n = int(rng.integers(1, 201))
    tied = bool(rng.integers(0, 2))
    draw = (lambda: rng.integers(0, 7, n).astype(float)) if tied else (lambda: rng.normal(size=n))
    ood = rng.random(n) < rng.uniform(0, 0.8)
    ood[0] = False
    loss = np.where(ood, 0.0, rng.integers(0, 9, n) / 8)
    return ScoredDataset(score_r=draw(), is_ood=ood, loss=loss, score_g=draw()), tied


def test_criterion_2_sweep_oracle():
    rng = np.random.default_rng(2)
    n_tied = mismatches = points = 0
    for _ in range(200):
        ds, tied = _random_dataset(rng)
        n_tied += tied
        for sel in ("r", "g"):
            values, _ = ds.scores(sel)
            sw = sweep_single_score(ds, sel)
            ref = brute_force_points(ds, values)
            points += len(ref)
            if len(sw) != len(ref) or not all(same_point(sw[k], ref[k]) for k in range(len(ref))):
                mismatches += 1
    report(2, mismatches == 0, f"200 datasets ({n_tied} with ties), {points} points, {mismatches} mismatching sweeps")


def test_criterion_3_auroc_oracle():
    rng = np.random.default_rng(3)
    worst = 0.0
    for k in range(100):
        n = int(rng.integers(2, 501))
        s = rng.integers(0, 20, n).astype(float) if k % 2 else rng.normal(size=n)
        ood = rng.random(n) < 0.4
        ood[0], ood[1] = False, True
        ds = ScoredDataset(score_r=s, is_ood=ood, loss=np.zeros(n))
        a = cv.auroc(cv.roc_curve(ds, "r"))
        worst = max(worst, abs(a - cv.rank_sum_auroc(s[~ood], s[ood])))
    report(3, worst <= 1e-12, f"100 datasets, max |trapezoid - rank-sum| = {worst:.1e}")


def test_criterion_4_lp_oracle():
    rng = np.random.default_rng(4)
    worst, optimal, max_frac, failures = 0.0, 0, 0, 0
    for _ in range(100):
        inst = random_instance(rng)
        sol = solve(inst)
        vals = enumerate_vertices(inst)
        if not vals:
            failures += sol.status != "infeasible"
            continue
        if sol.status != "optimal":
            failures += 1
            continue
        optimal += 1
        worst = max(worst, abs(sol.objective - min(vals)))
        max_frac = max(max_frac, len(sol.fractional()))
        verify_band_structure(inst, sol)
    ok = failures == 0 and worst <= 1e-9 and max_frac <= 2
    report(4, ok, f"{optimal} optimal / 100, max objective gap {worst:.1e}, max fractional {max_frac}, status errors {failures}")


def test_criterion_5_dominance(table):
    ds = table[0]
    grid = cv.default_grid()
    roc, pr = cv.RocEnvelope(grid), cv.PrEnvelope(grid)
    scan(ds, AngularFamily(360), [roc, pr])
    worst = 0.0
    for sel in ("r", "g"):
        single_roc = cv.roc_curve(ds, sel, grid=grid)
        worst = max(worst, float(np.max(single_roc.y - roc.values)))
        env = dict(zip(grid.tolist(), pr.values.tolist()))
        for x, y in cv.pr_curve(ds, sel, grid=grid).points:
            worst = max(worst, y - env[x])
    report(5, worst <= 1e-12, f"{len(grid)}-point grid, max single-over-double excess {worst:.1e}")


def test_criterion_6_reductions():
    s0 = default_setup().with_pi(0.0)
    xs = np.linspace(-12, 14, 5001)
    cost_ok = bool(np.array_equal(cost_score(s0, xs), conditional_risk(s0, xs)))
    rules = [SelectiveRule(mu, lam) for mu, lam in [(0.0, 0.3), (0.2, 0.5), (MU_INF, 1.0)]]
    prec_ok = all(theoretical_report(s0, r).precision == 1.0 for r in rules)
    ds = synthetic_scores(default_setup(), 5000, 6, pi=0.0).with_pi(0.0)
    prec_ok &= all(empirical_point(ds, r).precision == 1.0 for r in rules)
    agree = 0
    for phi in np.linspace(0.05, 1.0, 20):
        for sel in ("r", "g"):
            a = tune_prec_recall(ds, sel, TuningTargets(float(phi), kappa_min=0.999))
            b = tune_tpr_fpr(ds, sel, TuningTargets(float(phi), rho_max=1.0))
            agree += (a.selective_risk, a.tpr, a.rule.lam) == (b.selective_risk, b.tpr, b.rule.lam)
    ok = cost_ok and prec_ok and agree == 40
    report(6, ok, f"cost score == r_B: {cost_ok}; precision == 1: {prec_ok}; tuners agree {agree}/40")


def test_criterion_7_neyman_pearson(table):
    ds = table[0]
    id_, ood = ~ds.is_ood, ds.is_ood

    def auroc(s):
        return cv.rank_sum_auroc(s[id_], s[ood])

    g = ds.score_g
    base = auroc(g)
    rivals = {"r_B": auroc(ds.score_r), "r_B+0.2g": auroc(ds.score_r + 0.2 * g)}
    # log-normal noise on g; sigma below ~0.4 moves AUROC by less than the noise band
    rng = np.random.default_rng(7)
    for k, sigma in enumerate(rng.uniform(0.5, 1.5, 20)):
        rivals[f"#{k} g*exp({sigma:.3f}z)"] = auroc(g * np.exp(sigma * rng.standard_normal(g.size)))
    gaps = {k: base - v for k, v in rivals.items()}
    worst = min(gaps, key=gaps.get)
    ok = all(v > 0.005 for v in gaps.values())
    report(7, ok, f"g AUROC {base:.4f}; smallest margin {gaps[worst]:.4f} vs {worst}; {len(rivals)} rivals")


def test_criterion_8_coverage_ceiling(table):
    ds = table[0]
    phi = cv.rc_at_fpr(ds, "r", 0.2).meta["phi_max"]
    report(8, near(phi, 0.58, 0.02), f"phi_max of method C at rho_max 0.2 = {phi:.4f} (want 0.58 +- 0.02)")


def test_criterion_9_out_of_scope():
    ACCEPTANCE_LINES.append("criterion 9: SKIP  real-dataset table needs trained detectors; score-file workflow covered by 2 and 5")
    pytest.skip("real-dataset reproduction is a non-goal")
