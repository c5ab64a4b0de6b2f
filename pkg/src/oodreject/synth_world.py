"""Exact 1-D Gaussian world: densities, Bayes classifier and seeded sampling.

ID data is a Gaussian mixture with one component per class label
``1..K``; OOD data is a single Gaussian.  All density functions accept
scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

OOD_LABEL = 0
"""Label code used for OOD samples in label arrays (ID labels are 1..K)."""

RNG_SCHEME = "philox4x64/seedseq-block/v1"
SAMPLE_BLOCK = 65536

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class ZeroDensity(ValueError):
    """The ID density vanishes at the queried input."""


@dataclass(frozen=True)
class GaussComponent:
    weight: float
    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not self.weight >= 0:
            raise ValueError(f"component weight must be >= 0, got {self.weight}")
        if not self.variance > 0:
            raise ValueError(f"component variance must be > 0, got {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def pdf(self, x):
        """Unweighted normal density at ``x``."""
        z = (np.asarray(x, dtype=float) - self.mean) / self.std
        return np.exp(-0.5 * z * z - _LOG_SQRT_2PI) / self.std


@dataclass(frozen=True)
class Costs:
    eps1: float = 0.3
    eps2: float = 1.0
    eps3: float = 0.0

    def __post_init__(self) -> None:
        if min(self.eps1, self.eps2, self.eps3) < 0:
            raise ValueError("costs must be nonnegative")


@dataclass(frozen=True)
class SyntheticSetup:
    """ID mixture, OOD Gaussian, OOD prior and the three reject costs.

    ``eps1`` is the cost of rejecting an ID sample, ``eps2`` of predicting on
    an OOD sample and ``eps3`` of rejecting an OOD sample.
    """

    id_components: tuple[GaussComponent, ...]
    ood: GaussComponent
    pi: float
    costs: Costs = field(default_factory=Costs)

    def __post_init__(self) -> None:
        object.__setattr__(self, "id_components", tuple(self.id_components))
        if not self.id_components:
            raise ValueError("at least one ID component is required")
        total = sum(c.weight for c in self.id_components)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"ID weights must sum to 1, got {total!r}")
        if not 0.0 <= self.pi < 1.0:
            raise ValueError(f"OOD prior must lie in [0, 1), got {self.pi}")
        if not self.costs.eps2 > self.costs.eps3:
            raise ValueError("eps2 must exceed eps3")

    @property
    def n_classes(self) -> int:
        return len(self.id_components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.id_components])

    def with_pi(self, pi: float) -> SyntheticSetup:
        return replace(self, pi=pi)

    def with_costs(self, eps1: float, eps2: float, eps3: float) -> SyntheticSetup:
        return replace(self, costs=Costs(eps1, eps2, eps3))

    def to_dict(self) -> dict:
        return {
            "id_components": [
                {"weight": c.weight, "mean": c.mean, "variance": c.variance}
                for c in self.id_components
            ],
            "ood": {"mean": self.ood.mean, "variance": self.ood.variance},
            "pi": self.pi,
            "costs": {"eps1": self.costs.eps1, "eps2": self.costs.eps2, "eps3": self.costs.eps3},
            "param": "variance",
        }

    @classmethod
    def from_dict(cls, doc: dict) -> SyntheticSetup:
        """Build a setup from the JSON document layout.

        ``param`` selects how the second Gaussian parameter is read:
        ``"variance"`` (default) or ``"stddev"``.
        """
        param = doc.get("param", "variance")
        if param not in ("variance", "stddev"):
            raise ValueError(f"param must be 'variance' or 'stddev', got {param!r}")

        def spread(d: dict) -> float:
            if "variance" in d:
                v = float(d["variance"])
            elif "stddev" in d:
                v = float(d["stddev"])
            else:
                raise ValueError(f"component {d} lacks a variance/stddev field")
            return v * v if param == "stddev" else v

        comps = [
            GaussComponent(float(c["weight"]), float(c["mean"]), spread(c))
            for c in doc["id_components"]
        ]
        ood = GaussComponent(1.0, float(doc["ood"]["mean"]), spread(doc["ood"]))
        costs = Costs(**{k: float(v) for k, v in doc.get("costs", {}).items()})
        return cls(comps, ood, float(doc["pi"]), costs)


def load_setup(path: str | Path | None = None) -> SyntheticSetup:
    """Load a setup JSON file; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("oodreject.data").joinpath("synthetic_default.json").read_text()
    else:
        text = Path(path).read_text(encoding="utf-8")
    return SyntheticSetup.from_dict(json.loads(text))


def default_setup() -> SyntheticSetup:
    return load_setup(None)


def ood_mean3_setup() -> SyntheticSetup:
    """The variant with the OOD Gaussian centred on the third class mean."""
    text = resources.files("oodreject.data").joinpath("synthetic_ood_mean3.json").read_text()
    return SyntheticSetup.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# densities


def joint_densities(setup: SyntheticSetup, x) -> np.ndarray:
    """``p_I(x, y)`` for every label; shape ``x.shape + (K,)``."""
    x = np.asarray(x, dtype=float)
    return np.stack([c.weight * c.pdf(x) for c in setup.id_components], axis=-1)


def pdf_id(setup: SyntheticSetup, x):
    return joint_densities(setup, x).sum(axis=-1)


def pdf_ood(setup: SyntheticSetup, x):
    return setup.ood.pdf(x)


def density_ratio(num, den):
    """``num / den`` with the convention ``x / 0 = +inf`` (and ``0 / 0 = +inf``)."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    return out if out.ndim else float(out)


def likelihood_ratio(setup: SyntheticSetup, x):
    """OOD/ID likelihood ratio ``g(x) = p_O(x) / p_I(x)``; ``+inf`` where ``p_I = 0``."""
    return density_ratio(pdf_ood(setup, x), pdf_id(setup, x))


def _require_density(joint: np.ndarray) -> np.ndarray:
    total = joint.sum(axis=-1)
    if np.any(total <= 0):
        raise ZeroDensity("ID density is zero; the Bayes classifier is undefined there")
    return total


def bayes_classifier(setup: SyntheticSetup, x):
    """Posterior mode under 0/1 loss; ties go to the smallest label.

    Returns labels in ``1..K``.
    """
    joint = joint_densities(setup, x)
    _require_density(joint)
    # argmax returns the first maximal index, which is the tie rule we want
    label = np.argmax(joint, axis=-1) + 1
    return label if np.ndim(label) else int(label)


def posterior(setup: SyntheticSetup, x) -> np.ndarray:
    joint = joint_densities(setup, x)
    total = _require_density(joint)
    return joint / total[..., None]


def conditional_risk(setup: SyntheticSetup, x):
    """Bayes conditional risk under 0/1 loss: ``1 - max_y p_I(y | x)``."""
    joint = joint_densities(setup, x)
    total = _require_density(joint)
    r = 1.0 - joint.max(axis=-1) / total
    r = np.clip(r, 0.0, None)
    return r if np.ndim(r) else float(r)


def risk_density(setup: SyntheticSetup, x):
    """``sum_y p_I(x, y) * [y != h_B(x)]``, i.e. ``p_I(x) * r_B(x)``.

    Defined (as zero) where the ID density vanishes.
    """
    joint = joint_densities(setup, x)
    out = np.clip(joint.sum(axis=-1) - joint.max(axis=-1), 0.0, None)
    return out if np.ndim(out) else float(out)


# --------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class LabeledSample:
    x: float
    label: int | None  # None marks an OOD sample

    @property
    def is_ood(self) -> bool:
        return self.label is None


@dataclass(frozen=True)
class SampleBatch:
    """Columnar sample storage; ``label == OOD_LABEL`` marks OOD rows."""

    x: np.ndarray
    label: np.ndarray

    def __len__(self) -> int:
        return len(self.x)

    def __iter__(self) -> Iterator[LabeledSample]:
        for xi, yi in zip(self.x.tolist(), self.label.tolist()):
            yield LabeledSample(xi, None if yi == OOD_LABEL else yi)

    @property
    def is_ood(self) -> np.ndarray:
        return self.label == OOD_LABEL


def block_generator(seed: int, block: int) -> np.random.Generator:
    """Independent Philox stream for one block of ``SAMPLE_BLOCK`` samples.

    The stream is keyed by ``(seed, block)`` through ``SeedSequence`` spawn
    keys, so any block can be regenerated on its own.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def _sample_block(setup: SyntheticSetup, rng: np.random.Generator, size: int):
    # always draw a full block so sample i depends only on (seed, i)
    u_ood = rng.random(SAMPLE_BLOCK)[:size]
    u_comp = rng.random(SAMPLE_BLOCK)[:size]
    z = rng.standard_normal(SAMPLE_BLOCK)[:size]

    cum = np.cumsum(setup.weights)
    cum[-1] = 1.0
    comp = np.minimum(np.searchsorted(cum, u_comp, side="right"), setup.n_classes - 1)
    means = np.array([c.mean for c in setup.id_components])
    stds = np.array([c.std for c in setup.id_components])

    is_ood = u_ood < setup.pi
    x = np.where(is_ood, setup.ood.mean + setup.ood.std * z, means[comp] + stds[comp] * z)
    label = np.where(is_ood, OOD_LABEL, comp + 1)
    return x, label


def sample(setup: SyntheticSetup, n: int, seed: int) -> SampleBatch:
    """Draw ``n`` labelled samples from the ID/OOD mixture.

    Sample ``i`` belongs to block ``i // SAMPLE_BLOCK``; each block uses its
    own generator from :func:`block_generator`, so results depend only on
    ``(seed, n)`` and blocks may be produced in any order or in parallel.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    xs, labels = [], []
    for block, start in enumerate(range(0, n, SAMPLE_BLOCK)):
        size = min(SAMPLE_BLOCK, n - start)
        x, y = _sample_block(setup, block_generator(seed, block), size)
        xs.append(x)
        labels.append(y)
    if not xs:
        return SampleBatch(np.empty(0), np.empty(0, dtype=int))
    return SampleBatch(np.concatenate(xs), np.concatenate(labels).astype(int))


def sample_list(setup: SyntheticSetup, n: int, seed: int) -> list[LabeledSample]:
    return list(sample(setup, n, seed))


def bayes_boundaries(setup: SyntheticSetup, edges: Sequence[float] | np.ndarray) -> np.ndarray:
    """Points in ``[edges[0], edges[-1]]`` where the Bayes label changes.

    Located by sign changes on the given grid and refined by bisection on
    the log-density difference of the two competing components.
    """
    edges = np.asarray(edges, dtype=float)
    labels = np.argmax(joint_densities(setup, edges), axis=-1)
    idx = np.flatnonzero(labels[1:] != labels[:-1])
    out = []
    for i in idx:
        a, b = edges[i], edges[i + 1]
        ja, jb = labels[i], labels[i + 1]
        ca, cb = setup.id_components[ja], setup.id_components[jb]

        def diff(t: float) -> float:
            return (math.log(ca.weight) + _log_pdf(ca, t)) - (math.log(cb.weight) + _log_pdf(cb, t))

        fa = diff(a)
        for _ in range(80):
            m = 0.5 * (a + b)
            fm = diff(m)
            if (fm > 0) == (fa > 0):
                a, fa = m, fm
            else:
                b = m
        out.append(0.5 * (a + b))
    return np.array(out)


def _log_pdf(c: GaussComponent, t: float) -> float:
    z = (t - c.mean) / c.std
    return -0.5 * z * z - _LOG_SQRT_2PI - math.log(c.std)
