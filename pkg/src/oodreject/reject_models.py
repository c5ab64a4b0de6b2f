"""Optimal selective rules and their theoretical performance.

Every optimal acceptance rule in the three reject models thresholds the
score ``s(x) = r(x) + mu * g(x)`` where ``r`` is the conditional risk of the
classifier and ``g`` the OOD/ID likelihood ratio.  This module evaluates
TPR, FPR, precision, selective risk and cost-based risk of such rules on a
:class:`~oodreject.synth_world.SyntheticSetup` by quadrature.

Integrals are computed piecewise: the accepted region ``{x : s(x) <= lam}``
is located as a union of intervals (sign changes on a fine grid, refined by
bisection), the pieces are further split at Bayes decision boundaries where
``r_B`` has kinks, and each smooth piece is integrated with composite
Gauss-Legendre rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np

from . import synth_world as sw
from .synth_world import SyntheticSetup

MU_INF = math.inf


class UndefinedSelectiveRisk(ValueError):
    """Selective risk requested for a rule that accepts no ID mass."""


class Unattainable(ValueError):
    """No threshold reaches the requested rate."""

    def __init__(self, message: str, attainable: tuple[float, float]):
        super().__init__(message)
        self.attainable = attainable


@dataclass(frozen=True)
class SelectiveRule:
    """Accept ``x`` when ``score(x) < lam``; with prob. ``boundary_accept`` when equal.

    The score is ``score_r + mu * score_g``.  ``mu = inf`` ranks by
    ``score_g`` alone.  When ``alpha`` is set the score is the angular form
    ``cos(alpha) * score_r + sin(alpha) * score_g`` instead.  ``mu = None``
    marks a rule on an externally supplied score.
    """

    mu: float | None
    lam: float
    boundary_accept: float = 1.0
    alpha: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.boundary_accept <= 1.0:
            raise ValueError("boundary_accept must lie in [0, 1]")

    @classmethod
    def angular(cls, alpha: float, lam: float, boundary_accept: float = 1.0) -> SelectiveRule:
        cos, sin = angle_coefficients(alpha)
        mu = MU_INF if cos == 0.0 else sin / cos
        return cls(mu, lam, boundary_accept, alpha)

    def to_dict(self) -> dict:
        return {
            "mu": _jsonable(self.mu),
            "lambda": _jsonable(self.lam),
            "alpha": self.alpha,
            "boundary_accept": self.boundary_accept,
        }


def _jsonable(v: float | None):
    if v is None:
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def angle_coefficients(alpha: float) -> tuple[float, float]:
    """``(cos alpha, sin alpha)`` with exact values on the coordinate axes."""
    half = math.pi / 2
    if alpha == 0.0:
        return 1.0, 0.0
    if alpha == half:
        return 0.0, 1.0
    if alpha == math.pi:
        return -1.0, 0.0
    return math.cos(alpha), math.sin(alpha)


def mix_scores(score_r, score_g, mu: float | None = None, alpha: float | None = None):
    """Combine two score arrays as a rule would.

    Zero coefficients drop their term entirely, so an infinite ``score_g``
    never produces ``0 * inf``.
    """
    if alpha is not None:
        a, b = angle_coefficients(alpha)
    elif mu is None or mu == 0:
        a, b = 1.0, 0.0
    elif math.isinf(mu):
        a, b = 0.0, 1.0
    else:
        a, b = 1.0, mu
    if b == 0.0:
        return a * np.asarray(score_r, dtype=float)
    if a == 0.0:
        return b * np.asarray(score_g, dtype=float)
    return a * np.asarray(score_r, dtype=float) + b * np.asarray(score_g, dtype=float)


def _scores_at(setup: SyntheticSetup, x, mu, alpha=None):
    """Mixed score at ``x``; ``+inf`` where ``p_I = 0`` and ``g`` has a positive weight.

    ``r_B`` is undefined where ``p_I = 0``, so those points are only scored
    when the ``g`` term dominates; otherwise :class:`ZeroDensity` propagates.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(sw.likelihood_ratio(setup, x), dtype=float)
    void = np.isinf(g)
    if not np.any(void) or mix_scores(0.0, 1.0, mu, alpha) <= 0:
        return mix_scores(sw.conditional_risk(setup, x), g, mu, alpha)
    out = np.full(x.shape, np.inf)
    keep = ~void
    if np.any(keep):
        out[keep] = mix_scores(sw.conditional_risk(setup, x[keep]), g[keep], mu, alpha)
    return out if out.ndim else float(out)


def rule_score(setup: SyntheticSetup, rule: SelectiveRule, x):
    return _scores_at(setup, x, rule.mu, rule.alpha)


def cost_coefficient(setup: SyntheticSetup) -> float:
    c = setup.costs
    return (c.eps2 - c.eps3) * setup.pi / (1.0 - setup.pi)


def cost_score(setup: SyntheticSetup, x):
    """``r_B(x) + (eps2 - eps3) * pi / (1 - pi) * g(x)``, ``+inf`` where ``g`` is."""
    if setup.pi >= 1.0:
        raise ValueError("OOD prior must be < 1")
    return _scores_at(setup, x, cost_coefficient(setup))


def cost_optimal_rule(setup: SyntheticSetup) -> SelectiveRule:
    """Bayes classifier plus acceptance ``cost_score(x) <= eps1``."""
    return SelectiveRule(cost_coefficient(setup), setup.costs.eps1, boundary_accept=1.0)


# --------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class Quadrature:
    lo: float = -12.0
    hi: float = 14.0
    panels: int = 4096
    order: int = 8
    detect: int = 4  # detection points per panel for locating score crossings

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.panels

    @cached_property
    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.polynomial.legendre.leggauss(self.order)

    @cached_property
    def detection_grid(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.panels * self.detect + 1)

    def integrate(self, pieces: np.ndarray, fns) -> list[float]:
        """Integrate each function in ``fns`` over the union of ``pieces``.

        ``pieces`` is an ``(m, 2)`` array of disjoint intervals on each of
        which the integrands are smooth.
        """
        if len(pieces) == 0:
            return [0.0] * len(fns)
        a, b = pieces[:, 0], pieces[:, 1]
        k = np.maximum(np.ceil((b - a) / self.width).astype(int), 1)
        piece = np.repeat(np.arange(len(pieces)), k)
        sub = np.arange(k.sum()) - np.repeat(np.cumsum(k) - k, k)
        h = ((b - a) / k)[piece]
        left = a[piece] + sub * h
        t, w = self.nodes
        x = (left[:, None] + 0.5 * h[:, None] * (t[None, :] + 1.0)).ravel()
        wx = (0.5 * h[:, None] * w[None, :]).ravel()
        return [float(np.dot(wx, fn(x))) for fn in fns]


DEFAULT_QUADRATURE = Quadrature()


class ScoreProfile:
    """Score of one rule family (fixed ``mu``/``alpha``) on a setup.

    Caches the score on the detection grid so that integrals for many
    thresholds are cheap.
    """

    def __init__(
        self,
        setup: SyntheticSetup,
        mu: float | None = None,
        alpha: float | None = None,
        quad: Quadrature = DEFAULT_QUADRATURE,
    ):
        self.setup = setup
        self.mu = mu
        self.alpha = alpha
        self.quad = quad
        self.grid = quad.detection_grid
        self.values = self.score(self.grid)
        self.kinks = sw.bayes_boundaries(setup, self.grid)

    def score(self, x):
        r = sw.conditional_risk(self.setup, x)
        g = sw.likelihood_ratio(self.setup, x)
        return mix_scores(r, g, self.mu, self.alpha)

    def bracket(self) -> tuple[float, float]:
        v = self.values[np.isfinite(self.values)]
        lo, hi = float(v.min()), float(v.max())
        margin = 0.1 * max(hi - lo, abs(hi), abs(lo), 1e-12)
        return lo - margin, hi + margin

    def crossings(self, lam: float) -> np.ndarray:
        acc = self.values <= lam
        idx = np.flatnonzero(acc[1:] != acc[:-1])
        if len(idx) == 0:
            return np.empty(0)
        a = self.grid[idx].copy()
        b = self.grid[idx + 1].copy()
        a_acc = acc[idx]
        for _ in range(64):
            m = 0.5 * (a + b)
            m_acc = self.score(m) <= lam
            same = m_acc == a_acc
            a = np.where(same, m, a)
            b = np.where(same, b, m)
        return 0.5 * (a + b)

    def accepted_pieces(self, lam: float) -> np.ndarray:
        cuts = np.concatenate(([self.quad.lo], self.crossings(lam), self.kinks, [self.quad.hi]))
        cuts = np.unique(cuts)
        a, b = cuts[:-1], cuts[1:]
        keep = b > a
        a, b = a[keep], b[keep]
        accepted = self.score(0.5 * (a + b)) <= lam
        return np.column_stack((a[accepted], b[accepted]))

    def integrals(self, lam: float) -> tuple[float, float, float]:
        """``(phi, rho, accepted risk mass)`` for threshold ``lam``."""
        s = self.setup
        phi, rho, risk = self.quad.integrate(
            self.accepted_pieces(lam),
            (
                lambda x: sw.pdf_id(s, x),
                lambda x: sw.pdf_ood(s, x),
                lambda x: sw.risk_density(s, x),
            ),
        )
        return phi, rho, risk


@dataclass(frozen=True)
class TheoreticalReport:
    risk: float
    tpr: float
    fpr: float
    precision: float | None
    selective_risk: float | None  # None when the rule accepts no ID mass

    def require_selective_risk(self) -> float:
        if self.selective_risk is None:
            raise UndefinedSelectiveRisk("rule accepts no ID mass")
        return self.selective_risk


def precision_from_rates(tpr: float, fpr: float, pi: float) -> float | None:
    """``(1 - pi) tpr / (pi fpr + (1 - pi) tpr)``; ``None`` when 0/0."""
    num = (1.0 - pi) * tpr
    den = fpr * pi + tpr * (1.0 - pi)
    if den == 0:
        return None
    return num / den


def _report(setup: SyntheticSetup, phi: float, rho: float, risk_mass: float) -> TheoreticalReport:
    phi = min(max(phi, 0.0), 1.0)
    rho = min(max(rho, 0.0), 1.0)
    c = setup.costs
    pi = setup.pi
    # E[loss] regrouped: OOD part pays eps3 always plus (eps2 - eps3) when accepted;
    # ID part pays the label loss when accepted and eps1 when rejected.
    risk = pi * (c.eps3 + (c.eps2 - c.eps3) * rho) + (1.0 - pi) * (risk_mass + c.eps1 * (1.0 - phi))
    return TheoreticalReport(
        risk=risk,
        tpr=phi,
        fpr=rho,
        precision=precision_from_rates(phi, rho, pi),
        selective_risk=risk_mass / phi if phi > 0 else None,
    )


def theoretical_report(
    setup: SyntheticSetup, rule: SelectiveRule, quad: Quadrature = DEFAULT_QUADRATURE
) -> TheoreticalReport:
    """Risk, TPR, FPR, precision and selective risk of ``rule`` under ``setup``.

    The classifier is the Bayes classifier with 0/1 loss.  ``boundary_accept``
    has no effect: score level sets carry no mass in this continuous world.
    """
    if math.isinf(rule.lam):
        if rule.lam > 0:
            phi, rho, rm = quad.integrate(
                np.array([[quad.lo, quad.hi]]),
                (
                    lambda x: sw.pdf_id(setup, x),
                    lambda x: sw.pdf_ood(setup, x),
                    lambda x: sw.risk_density(setup, x),
                ),
            )
            return _report(setup, phi, rho, rm)
        return _report(setup, 0.0, 0.0, 0.0)
    profile = ScoreProfile(setup, rule.mu, rule.alpha, quad)
    return _report(setup, *profile.integrals(rule.lam))


def invert_threshold(
    setup: SyntheticSetup,
    mu: float | None,
    target: dict[Literal["tpr", "fpr"], float],
    *,
    alpha: float | None = None,
    tol: float = 1e-6,
    max_iter: int = 200,
    quad: Quadrature = DEFAULT_QUADRATURE,
) -> float:
    """Threshold ``lam`` at which the rule ``(mu, lam)`` attains a target rate.

    ``target`` is ``{"tpr": v}`` or ``{"fpr": v}``.  Bisection on the monotone
    map ``lam -> rate`` over the score range, widened by 10% on each side.
    """
    if len(target) != 1:
        raise ValueError("target must name exactly one of 'tpr' or 'fpr'")
    (kind, value), = target.items()
    if kind not in ("tpr", "fpr"):
        raise ValueError(f"unknown target kind {kind!r}")
    pos = 0 if kind == "tpr" else 1

    profile = ScoreProfile(setup, mu, alpha, quad)
    lo, hi = profile.bracket()
    r_lo = profile.integrals(lo)[pos]
    r_hi = profile.integrals(hi)[pos]
    if value <= 0:
        raise Unattainable(
            f"{kind} = {value} is reached only by the accept-nothing rule", (0.0, r_hi)
        )
    if abs(r_hi - value) <= tol:
        return hi
    if not r_lo - tol <= value <= r_hi + tol:
        raise Unattainable(
            f"{kind} = {value} outside attainable range [{r_lo:.6g}, {r_hi:.6g}]", (r_lo, r_hi)
        )
    best = (abs(r_lo - value), lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        r = profile.integrals(mid)[pos]
        if abs(r - value) < best[0]:
            best = (abs(r - value), mid)
        if abs(r - value) <= tol:
            return mid
        if r < value:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(mid)):
            break
    if best[0] > tol:
        raise Unattainable(
            f"{kind} = {value} not reached within {tol} (closest miss {best[0]:.3g})",
            (r_lo, r_hi),
        )
    return best[1]
