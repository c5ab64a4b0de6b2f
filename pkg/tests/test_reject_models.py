from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, optimize

from oodreject import synth_world as sw
from oodreject.reject_models import (
    MU_INF,
    SelectiveRule,
    Unattainable,
    UndefinedSelectiveRisk,
    angle_coefficients,
    cost_coefficient,
    cost_optimal_rule,
    cost_score,
    invert_threshold,
    mix_scores,
    precision_from_rates,
    rule_score,
    theoretical_report,
)

LO, HI = -12.0, 14.0


def oracle_rates(setup, rule):
    """(phi, rho, risk mass) by adaptive quadrature between brentq-located crossings."""
    f = lambda t: float(rule_score(setup, rule, t)) - rule.lam  # noqa: E731
    grid = np.linspace(LO, HI, 20001)
    vals = np.array([f(t) for t in grid])
    cuts = [optimize.brentq(f, grid[i], grid[i + 1], xtol=1e-14) for i in np.flatnonzero(np.diff(np.sign(vals)) != 0)]
    cuts += list(sw.bayes_boundaries(setup, grid))
    edges = sorted([LO, HI] + cuts)
    acc = lambda t: 1.0 if f(t) <= 0 else 0.0  # noqa: E731
    out = []
    for dens in (lambda t: sw.pdf_id(setup, t), lambda t: sw.pdf_ood(setup, t), lambda t: sw.risk_density(setup, t)):
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            if b - a < 1e-15 or not acc(0.5 * (a + b)):
                continue
            total += integrate.quad(lambda t: float(dens(t)), a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        out.append(total)
    return tuple(out)


class TestScores:
    def test_angle_coefficients_exact(self):
        assert angle_coefficients(0.0) == (1.0, 0.0)
        assert angle_coefficients(math.pi / 2) == (0.0, 1.0)

    def test_mix_drops_zero_terms(self):
        r = np.array([0.1, 0.2])
        g = np.array([np.inf, 1.0])
        assert np.array_equal(mix_scores(r, g, 0.0), r)
        assert np.array_equal(mix_scores(r, g, MU_INF), g)
        assert np.array_equal(mix_scores(r, g, alpha=0.0), r)

    def test_cost_score_pi_zero_is_risk(self, setup):
        s0 = setup.with_pi(0.0)
        xs = np.linspace(-6, 8, 57)
        assert np.array_equal(cost_score(s0, xs), sw.conditional_risk(s0, xs))

    def test_cost_score_vanishing_cost_gap(self, setup):
        # eps2 == eps3 is excluded by the setup; the coefficient goes to zero with the gap
        s = setup.with_costs(0.3, 1e-13, 0.0)
        xs = np.linspace(-4, 6, 21)
        assert np.allclose(cost_score(s, xs), sw.conditional_risk(s, xs), atol=1e-11)
        with pytest.raises(ValueError):
            setup.with_costs(0.3, 0.5, 0.5)

    def test_cost_score_at_three(self, setup3):
        expected = float(sw.conditional_risk(setup3, 3.0)) + 5.0738 / 3.0
        assert cost_score(setup3, 3.0) == pytest.approx(expected, abs=1e-4)
        assert cost_coefficient(setup3) == pytest.approx(1 / 3, rel=1e-15)

    def test_cost_score_infinite_g(self):
        c = sw.GaussComponent(1.0, 0.0, 1.0)
        s = sw.SyntheticSetup([c], sw.GaussComponent(1.0, 60.0, 1.0), 0.2)
        assert sw.pdf_id(s, 70.0) == 0.0
        assert cost_score(s, 70.0) == math.inf
        assert np.array_equal(cost_score(s, np.array([0.0, 70.0])), [float(cost_score(s, 0.0)), math.inf])


class TestCostOptimalRule:
    def test_parameters(self, setup):
        rule = cost_optimal_rule(setup)
        assert rule.mu == pytest.approx(1.0 * 0.25 / 0.75)
        assert rule.lam == 0.3
        assert rule.boundary_accept == 1.0

    def test_zero_threshold_rejects_everything(self, setup):
        rep = theoretical_report(setup, cost_optimal_rule(setup.with_costs(0.0, 1.0, 0.0)))
        assert rep.tpr == 0.0 and rep.fpr == 0.0

    def test_slack_threshold_accepts_everything(self):
        # bounded score: identical ID and OOD, so g = 1 and s_C <= 0.5 + mu
        c = sw.GaussComponent(1.0, 0.0, 1.0)
        s = sw.SyntheticSetup([sw.GaussComponent(0.5, -1, 1), sw.GaussComponent(0.5, 1, 1)], c, 0.2)
        s = s.with_costs(5.0, 1.0, 0.0)
        rep = theoretical_report(s, cost_optimal_rule(s))
        assert rep.tpr == pytest.approx(1.0, abs=1e-9)
        assert rep.fpr == pytest.approx(1.0, abs=1e-9)

    def test_chow_rule_when_no_ood(self, setup):
        s0 = setup.with_pi(0.0)
        rule = cost_optimal_rule(s0)
        assert rule.mu == 0.0
        xs = np.linspace(-6, 8, 1001)
        accepted = rule_score(s0, rule, xs) <= rule.lam
        assert np.array_equal(accepted, sw.conditional_risk(s0, xs) <= 0.3)

    def test_optimal_on_binned_world(self, setup):
        """On 2000 bins the Bayes-plus-threshold rule beats random and perturbed rules."""
        edges = np.linspace(LO, HI, 2001)
        mid, w = 0.5 * (edges[1:] + edges[:-1]), np.diff(edges)
        p_i, p_o, rm = sw.pdf_id(setup, mid) * w, sw.pdf_ood(setup, mid) * w, sw.risk_density(setup, mid) * w
        c = setup.costs
        pi = setup.pi

        def risk(acc):
            return pi * (c.eps3 + (c.eps2 - c.eps3) * p_o @ acc) + (1 - pi) * (rm @ acc + c.eps1 * (1 - p_i @ acc))

        score = cost_score(setup, mid)
        best = risk((score <= c.eps1).astype(float))
        rng = np.random.default_rng(0)
        for _ in range(1000):
            assert best <= risk(rng.random(2000)) + 1e-9
        for d in (-0.1, -0.01, 0.01, 0.1):
            assert best <= risk((score <= c.eps1 + d).astype(float)) + 1e-9


class TestTheoreticalReport:
    def test_accept_all(self, setup):
        rep = theoretical_report(setup, SelectiveRule(0.0, math.inf))
        assert rep.tpr == pytest.approx(1.0, abs=1e-9)
        assert rep.fpr == pytest.approx(1.0, abs=1e-9)
        assert rep.precision == pytest.approx(0.75, abs=1e-9)

    def test_accept_none(self, setup):
        rep = theoretical_report(setup, SelectiveRule(0.0, -math.inf))
        assert rep.tpr == 0.0 and rep.fpr == 0.0
        assert rep.selective_risk is None
        with pytest.raises(UndefinedSelectiveRisk):
            rep.require_selective_risk()

    @pytest.mark.parametrize(
        "mu, lam",
        [(0.0, 0.2), (0.2, 0.45), (MU_INF, 0.8), (1.0, 1.3), (-0.05, 0.1)],
    )
    def test_against_adaptive_quadrature(self, setup, mu, lam):
        rule = SelectiveRule(mu, lam)
        rep = theoretical_report(setup, rule)
        phi, rho, rm = oracle_rates(setup, rule)
        assert rep.tpr == pytest.approx(phi, abs=1e-8)
        assert rep.fpr == pytest.approx(rho, abs=1e-8)
        assert rep.selective_risk == pytest.approx(rm / phi, abs=1e-7)

    def test_angular_rule(self, setup):
        alpha = 0.3
        rule = SelectiveRule.angular(alpha, 0.5)
        a, b = angle_coefficients(alpha)
        rep = theoretical_report(setup, rule)
        ref = theoretical_report(setup, SelectiveRule(b / a, 0.5 / a))
        assert rep.tpr == pytest.approx(ref.tpr, abs=1e-9)
        assert rep.fpr == pytest.approx(ref.fpr, abs=1e-9)

    def test_cost_risk_against_direct_expectation(self, setup):
        rule = SelectiveRule(0.2, 0.45)
        rep = theoretical_report(setup, rule)
        c, pi = setup.costs, setup.pi

        def integrand(t):
            acc = float(rule_score(setup, rule, t)) <= rule.lam
            joint = sw.joint_densities(setup, t)
            h = int(sw.bayes_classifier(setup, t))
            id_part = sum(joint[y] * ((y + 1 != h) if acc else c.eps1) for y in range(3))
            ood_part = sw.pdf_ood(setup, t) * (c.eps2 if acc else c.eps3)
            return (1 - pi) * id_part + pi * ood_part

        edges = np.linspace(LO, HI, 2601)
        total = sum(integrate.quad(integrand, a, b, limit=50)[0] for a, b in zip(edges[:-1], edges[1:]))
        assert rep.risk == pytest.approx(total, abs=1e-6)

    def test_method_b_at_table_target(self, setup):
        lam = invert_threshold(setup, 0.2, {"tpr": 0.7})
        rep = theoretical_report(setup, SelectiveRule(0.2, lam))
        assert rep.fpr <= 0.2
        assert rep.selective_risk == pytest.approx(0.143, abs=0.01)

    def test_precision_identity(self, setup):
        for mu, lam in [(0.0, 0.3), (0.5, 0.6), (MU_INF, 1.0)]:
            rep = theoretical_report(setup, SelectiveRule(mu, lam))
            pi = setup.pi
            assert rep.precision == (1 - pi) * rep.tpr / (rep.fpr * pi + rep.tpr * (1 - pi))

    def test_precision_one_without_ood(self, setup):
        s0 = setup.with_pi(0.0)
        for mu, lam in [(0.0, 0.3), (0.5, 0.6), (MU_INF, 1.0)]:
            rep = theoretical_report(s0, SelectiveRule(mu, lam))
            assert rep.tpr > 0 and rep.precision == 1.0

    def test_boundary_irrelevant(self, setup):
        a = theoretical_report(setup, SelectiveRule(0.2, 0.45, boundary_accept=1.0))
        b = theoretical_report(setup, SelectiveRule(0.2, 0.45, boundary_accept=0.0))
        assert a == b

    def test_precision_undefined(self):
        assert precision_from_rates(0.0, 0.0, 0.3) is None

    @pytest.mark.parametrize("mu", [0.0, 0.2, MU_INF])
    def test_monotone_in_threshold(self, setup, mu):
        lams = np.linspace(-0.1, 3.0 if mu != MU_INF else 8.0, 200)
        reps = [theoretical_report(setup, SelectiveRule(mu, lam)) for lam in lams]
        phis = np.array([r.tpr for r in reps])
        rhos = np.array([r.fpr for r in reps])
        assert np.all(np.diff(phis) >= -1e-12)
        assert np.all(np.diff(rhos) >= -1e-12)


class TestInvertThreshold:
    def test_full_coverage_returns_upper_bracket(self, setup):
        lam = invert_threshold(setup, 0.0, {"tpr": 1.0})
        assert lam >= float(np.max(sw.conditional_risk(setup, np.linspace(LO, HI, 4097))))
        assert theoretical_report(setup, SelectiveRule(0.0, lam)).tpr == pytest.approx(1.0, abs=1e-6)

    def test_risk_quantile(self, setup):
        lam = invert_threshold(setup, 0.0, {"tpr": 0.7})
        # weighted quantile of r_B under p_I on a dense grid
        x = np.linspace(LO, HI, 2_000_001)
        w = sw.pdf_id(setup, x)
        r = sw.conditional_risk(setup, x)
        order = np.argsort(r)
        cdf = np.cumsum(w[order]) / w.sum()
        q = r[order][np.searchsorted(cdf, 0.7)]
        assert lam == pytest.approx(q, abs=2e-4)
        assert theoretical_report(setup, SelectiveRule(0.0, lam)).tpr == pytest.approx(0.7, abs=1e-6)

    def test_fpr_target(self, setup):
        lam = invert_threshold(setup, MU_INF, {"fpr": 0.2})
        assert theoretical_report(setup, SelectiveRule(MU_INF, lam)).fpr == pytest.approx(0.2, abs=1e-6)

    def test_zero_fpr_unattainable(self, setup):
        with pytest.raises(Unattainable) as exc:
            invert_threshold(setup, 0.2, {"fpr": 0.0})
        assert exc.value.attainable[0] == 0.0

    def test_bad_target(self, setup):
        with pytest.raises(ValueError):
            invert_threshold(setup, 0.2, {"precision": 0.5})
