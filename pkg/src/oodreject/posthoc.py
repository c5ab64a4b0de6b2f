"""Empirical operating points and constrained post-hoc threshold tuning.

A *family* is the set of selective classifiers a method produces:

* a single score (``"r"``, ``"g"``, a mixing coefficient ``mu`` or an
  explicit score array) gives ``{s(x) <= lam : lam}``;
* :class:`AngularFamily` gives ``{cos(a) s_r + sin(a) s_g <= lam : a, lam}``
  over a grid of angles.

Every family is evaluated through sorted sweeps that list all attainable
operating points of one score in ``O(n log n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Literal, Sequence, Union

import numpy as np

from .reject_models import (
    MU_INF,
    SelectiveRule,
    mix_scores,
    precision_from_rates,
)

Mode = Literal["tpr-fpr", "prec-recall"]


class Infeasible(Exception):
    """No member of the family meets the targets (reported as "unable")."""

    def __init__(self, message: str, frontier: dict | None = None):
        super().__init__(message)
        self.frontier = frontier or {}


@dataclass(frozen=True)
class ScoredSample:
    score_r: float
    score_g: float | None
    is_ood: bool
    loss: float
    id: str | None = None


@dataclass(frozen=True, eq=False)
class ScoredDataset:
    """Validation scores in columnar form.

    ``loss`` is the prediction loss of the classifier on each row and must
    be zero on OOD rows.  ``pi_override`` fixes the OOD prior used for
    precision; otherwise the dataset's own OOD fraction is used.
    """

    score_r: np.ndarray
    is_ood: np.ndarray
    loss: np.ndarray
    score_g: np.ndarray | None = None
    pi_override: float | None = None
    ids: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("score_r", np.asarray(self.score_r, dtype=float))
        set_("is_ood", np.asarray(self.is_ood, dtype=bool))
        set_("loss", np.asarray(self.loss, dtype=float))
        if self.score_g is not None:
            set_("score_g", np.asarray(self.score_g, dtype=float))
        n = len(self.score_r)
        for name in ("is_ood", "loss"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length differs from score_r")
        if self.score_g is not None and len(self.score_g) != n:
            raise ValueError("score_g length differs from score_r")
        if n == 0:
            raise ValueError("empty dataset")
        if self.is_ood.all():
            raise ValueError("dataset needs at least one ID sample")
        if np.any(self.loss < 0) or np.any(np.isnan(self.loss)):
            raise ValueError("losses must be nonnegative")
        if np.any(self.loss[self.is_ood] != 0):
            raise ValueError("OOD rows must carry zero loss")
        if np.any(np.isnan(self.score_r)) or (
            self.score_g is not None and np.any(np.isnan(self.score_g))
        ):
            raise ValueError("scores must not be NaN")
        if self.pi_override is not None and not 0.0 <= self.pi_override < 1.0:
            raise ValueError("pi_override must lie in [0, 1)")

    @classmethod
    def from_samples(
        cls, samples: Sequence[ScoredSample], pi_override: float | None = None
    ) -> ScoredDataset:
        samples = list(samples)
        has_g = [s.score_g is not None for s in samples]
        if any(has_g) and not all(has_g):
            raise ValueError("score_g must be present on all samples or on none")
        ids = tuple(s.id for s in samples) if all(s.id is not None for s in samples) else None
        return cls(
            score_r=np.array([s.score_r for s in samples], dtype=float),
            is_ood=np.array([s.is_ood for s in samples], dtype=bool),
            loss=np.array([s.loss for s in samples], dtype=float),
            score_g=np.array([s.score_g for s in samples], dtype=float) if all(has_g) and samples else None,
            pi_override=pi_override,
            ids=ids,
        )

    def samples(self) -> list[ScoredSample]:
        g = self.score_g if self.score_g is not None else [None] * len(self)
        ids = self.ids or [None] * len(self)
        return [
            ScoredSample(float(r), None if gi is None else float(gi), bool(o), float(l), i)
            for r, gi, o, l, i in zip(self.score_r, g, self.is_ood, self.loss, ids)
        ]

    def __len__(self) -> int:
        return len(self.score_r)

    @property
    def n_id(self) -> int:
        return int((~self.is_ood).sum())

    @property
    def n_ood(self) -> int:
        return int(self.is_ood.sum())

    @property
    def has_score_g(self) -> bool:
        return self.score_g is not None

    @property
    def pi(self) -> float:
        if self.pi_override is not None:
            return self.pi_override
        return self.n_ood / len(self)

    def with_pi(self, pi: float | None) -> ScoredDataset:
        return ScoredDataset(self.score_r, self.is_ood, self.loss, self.score_g, pi, self.ids)

    def _require_g(self) -> np.ndarray:
        if self.score_g is None:
            raise ValueError("dataset has no score_g column")
        return self.score_g

    def scores(self, selector) -> tuple[np.ndarray, float | None]:
        """Resolve a score selector to ``(values, mu)``.

        ``"r"`` -> ``score_r`` (mu 0), ``"g"`` -> ``score_g`` (mu inf), a float
        ``mu`` -> ``score_r + mu * score_g``, an array -> itself (mu None).
        """
        if isinstance(selector, str):
            if selector == "r":
                return self.score_r, 0.0
            if selector == "g":
                return self._require_g(), MU_INF
            raise ValueError(f"unknown score selector {selector!r}")
        if np.isscalar(selector):
            mu = float(selector)
            if mu == 0:
                return self.score_r, 0.0
            return mix_scores(self.score_r, self._require_g(), mu), mu
        values = np.asarray(selector, dtype=float)
        if values.shape != self.score_r.shape:
            raise ValueError("explicit score array must have one value per sample")
        return values, None


@dataclass(frozen=True)
class TuningTargets:
    phi_min: float
    rho_max: float | None = None
    kappa_min: float | None = None

    def __post_init__(self) -> None:
        if (self.rho_max is None) == (self.kappa_min is None):
            raise ValueError("set exactly one of rho_max / kappa_min")
        for name in ("phi_min", "rho_max", "kappa_min"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def mode(self) -> Mode:
        return "tpr-fpr" if self.rho_max is not None else "prec-recall"


@dataclass(frozen=True)
class OperatingPoint:
    rule: SelectiveRule
    tpr: float
    fpr: float
    precision: float | None
    selective_risk: float | None  # None iff nothing ID is accepted
    accepted_id: float
    accepted_ood: float

    def to_dict(self) -> dict:
        return {
            "rule": self.rule.to_dict(),
            "tpr": self.tpr,
            "fpr": self.fpr,
            "precision": self.precision,
            "selective_risk": self.selective_risk,
            "accepted_id": self.accepted_id,
            "accepted_ood": self.accepted_ood,
        }


def empirical_point(
    dataset: ScoredDataset, rule: SelectiveRule, scores: np.ndarray | None = None
) -> OperatingPoint:
    """Evaluate one rule on the dataset.

    Rows with score equal to the threshold are accepted with probability
    ``rule.boundary_accept``; counts are then expected counts.  Pass
    ``scores`` to threshold an external score instead of the rule's mix.
    """
    if scores is None:
        if rule.alpha is None and (rule.mu is None or rule.mu == 0):
            s = dataset.score_r
        else:
            s = mix_scores(dataset.score_r, dataset._require_g(), rule.mu, rule.alpha)
    else:
        s = np.asarray(scores, dtype=float)
    c = np.where(s < rule.lam, 1.0, np.where(s == rule.lam, rule.boundary_accept, 0.0))
    idm = ~dataset.is_ood
    acc_id = float(c[idm].sum())
    acc_ood = float(c[dataset.is_ood].sum())
    if rule.boundary_accept in (0.0, 1.0):
        acc_id, acc_ood = int(acc_id), int(acc_ood)
    tpr = acc_id / dataset.n_id
    fpr = acc_ood / dataset.n_ood if dataset.n_ood else 0.0
    risk = float((dataset.loss[idm] * c[idm]).sum()) / acc_id if acc_id > 0 else None
    return OperatingPoint(
        rule=rule,
        tpr=tpr,
        fpr=fpr,
        precision=precision_from_rates(tpr, fpr, dataset.pi),
        selective_risk=risk,
        accepted_id=acc_id,
        accepted_ood=acc_ood,
    )


@dataclass(frozen=True, eq=False)
class Sweep:
    """All attainable operating points of ``c(x) = [s(x) <= lam]``.

    Entry ``k`` accepts the ``k`` lowest tie groups of the score; entry 0
    accepts nothing (``lam = -inf``).  Arrays have length ``groups + 1``.
    """

    thresholds: np.ndarray
    accepted_id: np.ndarray
    accepted_ood: np.ndarray
    loss_sum: np.ndarray
    n_id: int
    n_ood: int
    pi: float
    mu: float | None = None
    alpha: float | None = None
    tpr: np.ndarray = field(init=False)
    fpr: np.ndarray = field(init=False)
    risk: np.ndarray = field(init=False)
    precision: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        tpr = self.accepted_id / self.n_id
        fpr = self.accepted_ood / self.n_ood if self.n_ood else np.zeros(len(self.thresholds))
        with np.errstate(divide="ignore", invalid="ignore"):
            risk = np.where(self.accepted_id > 0, self.loss_sum / self.accepted_id, np.nan)
            num = (1.0 - self.pi) * tpr
            den = fpr * self.pi + tpr * (1.0 - self.pi)
            prec = np.where(den > 0, num / den, np.nan)
        set_("tpr", tpr)
        set_("fpr", fpr)
        set_("risk", risk)
        set_("precision", prec)

    def __len__(self) -> int:
        return len(self.thresholds)

    def rule(self, k: int) -> SelectiveRule:
        lam = float(self.thresholds[k])
        if self.alpha is not None:
            return SelectiveRule.angular(self.alpha, lam)
        return SelectiveRule(self.mu, lam)

    def __getitem__(self, k: int) -> OperatingPoint:
        if k < 0:
            k += len(self)
        risk = self.risk[k]
        prec = self.precision[k]
        return OperatingPoint(
            rule=self.rule(k),
            tpr=float(self.tpr[k]),
            fpr=float(self.fpr[k]),
            precision=None if math.isnan(prec) else float(prec),
            selective_risk=None if math.isnan(risk) else float(risk),
            accepted_id=int(self.accepted_id[k]),
            accepted_ood=int(self.accepted_ood[k]),
        )

    def __iter__(self) -> Iterator[OperatingPoint]:
        for k in range(len(self)):
            yield self[k]

    def points(self) -> list[OperatingPoint]:
        return list(self)

    @property
    def ccr(self) -> np.ndarray:
        """Correct-classification rate ``1 - R^S_n`` (NaN where undefined)."""
        return 1.0 - self.risk

    @property
    def ccr_weighted(self) -> np.ndarray:
        """Accepted-and-correct ID mass over all ID: ``tpr * (1 - R^S_n)``."""
        return (self.accepted_id - self.loss_sum) / self.n_id


def sweep_scores(
    scores: np.ndarray,
    is_ood: np.ndarray,
    loss: np.ndarray,
    pi: float,
    *,
    mu: float | None = None,
    alpha: float | None = None,
) -> Sweep:
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    ood = is_ood[order]
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    acc_id = np.cumsum(~ood)[ends]
    acc_ood = np.cumsum(ood)[ends]
    loss_sum = np.cumsum(loss[order])[ends]
    return Sweep(
        thresholds=np.concatenate(([-np.inf], s[ends])),
        accepted_id=np.concatenate(([0], acc_id)),
        accepted_ood=np.concatenate(([0], acc_ood)),
        loss_sum=np.concatenate(([0.0], loss_sum)),
        n_id=int((~is_ood).sum()),
        n_ood=int(is_ood.sum()),
        pi=pi,
        mu=mu,
        alpha=alpha,
    )


def sweep_single_score(dataset: ScoredDataset, score_selector="r") -> Sweep:
    """Every operating point of one score, sorted by threshold.

    Tied scores enter together, so the sweep has ``#distinct scores + 1``
    points.
    """
    values, mu = dataset.scores(score_selector)
    return sweep_scores(values, dataset.is_ood, dataset.loss, dataset.pi, mu=mu)


# --------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class AngularFamily:
    """Double-score family on ``d`` equispaced angles of ``[0, pi)``.

    ``alphas`` overrides the grid (e.g. to restrict to a single direction).
    """

    d: int = 360
    alphas: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.alphas is None and self.d < 2:
            raise ValueError("angular grid needs d >= 2")

    def angles(self) -> list[float]:
        if self.alphas is not None:
            return list(self.alphas)
        # exact axis directions keep the pure-score members bit-identical
        return [math.pi / 2 if 2 * k == self.d else math.pi * k / self.d for k in range(self.d)]

    def sweeps(self, dataset: ScoredDataset) -> Iterator[Sweep]:
        g = dataset._require_g()
        for alpha in self.angles():
            s = mix_scores(dataset.score_r, g, alpha=alpha)
            yield sweep_scores(s, dataset.is_ood, dataset.loss, dataset.pi, alpha=alpha)


Family = Union[str, float, np.ndarray, AngularFamily, Sequence]


def family_sweeps(dataset: ScoredDataset, family) -> Iterator[Sweep]:
    """Sweeps spanning a family, in a fixed deterministic order."""
    if isinstance(family, AngularFamily):
        yield from family.sweeps(dataset)
    elif isinstance(family, (list, tuple)):
        for member in family:
            yield from family_sweeps(dataset, member)
    else:
        yield sweep_single_score(dataset, family)


def is_double(family) -> bool:
    return isinstance(family, AngularFamily)


# --------------------------------------------------------------------------
# tuning


def feasible_mask(sweep: Sweep, targets: TuningTargets) -> np.ndarray:
    ok = (sweep.tpr >= targets.phi_min) & (sweep.accepted_id > 0)
    if targets.rho_max is not None:
        return ok & (sweep.fpr <= targets.rho_max)
    with np.errstate(invalid="ignore"):
        return ok & (sweep.precision >= targets.kappa_min)


class BestPoint:
    """Running argmin of selective risk over feasible sweep points.

    Ties prefer higher TPR, then the earlier sweep, then the lower threshold.
    """

    def __init__(self, targets: TuningTargets):
        self.targets = targets
        self.best: OperatingPoint | None = None
        self._key: tuple[float, float] | None = None
        self.max_tpr = 0.0  # max TPR meeting the second constraint
        self.best_second: float | None = None  # best FPR / precision at TPR >= phi_min

    def update(self, sweep: Sweep) -> None:
        t = self.targets
        second_ok = (
            sweep.fpr <= t.rho_max
            if t.rho_max is not None
            else np.nan_to_num(sweep.precision, nan=-1.0) >= t.kappa_min
        )
        if second_ok.any():
            self.max_tpr = max(self.max_tpr, float(sweep.tpr[second_ok].max()))
        cover = (sweep.tpr >= t.phi_min) & (sweep.accepted_id > 0)
        if cover.any():
            if t.rho_max is not None:
                v = float(sweep.fpr[cover].min())
                self.best_second = v if self.best_second is None else min(self.best_second, v)
            else:
                v = float(np.nanmax(sweep.precision[cover]))
                self.best_second = v if self.best_second is None else max(self.best_second, v)

        cand = np.flatnonzero(feasible_mask(sweep, t))
        if len(cand) == 0:
            return
        order = np.lexsort((cand, -sweep.tpr[cand], sweep.risk[cand]))
        k = int(cand[order[0]])
        key = (float(sweep.risk[k]), -float(sweep.tpr[k]))
        if self._key is None or key < self._key:
            self._key = key
            self.best = sweep[k]

    def result(self) -> OperatingPoint:
        if self.best is None:
            t = self.targets
            second = "fpr" if t.rho_max is not None else "precision"
            frontier = {"max_tpr_meeting_" + second: self.max_tpr, "best_" + second + "_at_phi_min": self.best_second}
            raise Infeasible(f"unable to reach targets {t}", frontier)
        return self.best


def scan(dataset: ScoredDataset, family, consumers: Iterable) -> None:
    """Feed every sweep of ``family`` to each consumer's ``update``."""
    consumers = list(consumers)
    for sw_ in family_sweeps(dataset, family):
        for c in consumers:
            c.update(sw_)


def tune(dataset: ScoredDataset, family, targets: TuningTargets) -> OperatingPoint:
    best = BestPoint(targets)
    scan(dataset, family, [best])
    return best.result()


def tune_tpr_fpr(dataset: ScoredDataset, family, targets: TuningTargets) -> OperatingPoint:
    """Minimal selective risk subject to ``tpr >= phi_min`` and ``fpr <= rho_max``."""
    if targets.rho_max is None:
        raise ValueError("TPR-FPR tuning needs rho_max")
    return tune(dataset, family, targets)


def tune_prec_recall(
    dataset: ScoredDataset, family, targets: TuningTargets, pi: float | None = None
) -> OperatingPoint:
    """Minimal selective risk subject to ``tpr >= phi_min`` and ``precision >= kappa_min``.

    Precision uses ``pi`` when given, else the dataset's prior.
    """
    if targets.kappa_min is None:
        raise ValueError("Precision-Recall tuning needs kappa_min")
    if pi is not None:
        dataset = dataset.with_pi(pi)
    return tune(dataset, family, targets)


def double_score_grid(
    dataset: ScoredDataset,
    targets: TuningTargets,
    mode: Mode | None = None,
    d: int = 360,
    alphas: Sequence[float] | None = None,
) -> OperatingPoint:
    """Best rule over the angular family; the winner's rule records ``alpha``."""
    if mode is not None and mode != targets.mode:
        raise ValueError(f"mode {mode!r} does not match targets ({targets.mode})")
    family = AngularFamily(d, tuple(alphas) if alphas is not None else None)
    return tune(dataset, family, targets)
