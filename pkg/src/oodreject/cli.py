"""Command-line interface: ``oodreject {synth,tune,curves,lp}``.

Exit codes: 0 success, 1 usage or I/O error, 2 infeasible / unable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import curves as cv
from .benchmark import DEFAULT_TARGETS, Method, MethodResult, evaluate_method, ranking, standard_methods, synthetic_scores
from .fileio import FileFormatError, read_lp_instance, read_scores, write_lp_solution, write_scores
from .finite_lp import LpInstance, StructureViolation, prec_recall_rho_max, solve, verify_band_structure
from .posthoc import AngularFamily, ScoredDataset, TuningTargets, scan
from .svgplot import render
from .synth_world import RNG_SCHEME, load_setup

EXIT_OK, EXIT_USAGE, EXIT_UNABLE = 0, 1, 2
SCHEMA = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    setup_path: str | None = None
    scores_path: str | None = None
    instance_path: str | None = None
    mode: str = "tpr-fpr"
    phi_min: float | None = None
    rho_max: float | None = None
    kappa_min: float | None = None
    pi: float | None = None
    n: int = 200_000
    seed: int = 1
    d: int = 360
    output_dir: str = "out"
    weighting: str = "plain"
    extra: dict = field(default_factory=dict)

    def targets(self) -> dict[str, TuningTargets]:
        """Target sets keyed by mode, flags overriding the defaults."""
        out = {}
        for mode, base in DEFAULT_TARGETS.items():
            phi = base.phi_min if self.phi_min is None else self.phi_min
            if mode == "tpr-fpr":
                out[mode] = TuningTargets(phi, rho_max=base.rho_max if self.rho_max is None else self.rho_max)
            else:
                out[mode] = TuningTargets(phi, kappa_min=base.kappa_min if self.kappa_min is None else self.kappa_min)
        return out

    def validate(self) -> None:
        def unit(name, v, lo_open=False):
            if v is not None and not ((0 < v if lo_open else 0 <= v) and v <= 1):
                raise UsageError(f"--{name.replace('_', '-')} must lie in {'(0' if lo_open else '[0'}, 1], got {v}")

        unit("phi_min", self.phi_min)
        unit("rho_max", self.rho_max)
        unit("kappa_min", self.kappa_min, lo_open=True)
        if self.pi is not None and not 0 <= self.pi < 1:
            raise UsageError(f"--pi must lie in [0, 1), got {self.pi}")
        if self.d < 2:
            raise UsageError("--d must be at least 2")
        if self.command == "synth" and self.n <= 0:
            raise UsageError("empty dataset: --n must be positive")
        if self.command in ("tune", "curves") and not self.scores_path:
            raise UsageError(f"{self.command} needs --scores")
        if self.command == "lp":
            if not self.instance_path:
                raise UsageError("lp needs an instance CSV")
            if self.phi_min is None:
                raise UsageError("lp needs --phi-min")
            if self.mode == "tpr-fpr" and self.rho_max is None:
                raise UsageError("lp in tpr-fpr mode needs --rho-max")
            if self.mode == "prec-recall" and (self.kappa_min is None or self.pi is None):
                raise UsageError("lp in prec-recall mode needs --kappa-min and --pi")

    def hashed(self) -> dict:
        """Inputs that determine the outputs (paths and output dir excluded)."""
        doc = {
            "command": self.command,
            "mode": self.mode,
            "targets": {m: _targets_dict(t) for m, t in self.targets().items()},
            "pi": self.pi,
            "d": self.d,
            "weighting": self.weighting,
        }
        if self.command == "synth":
            doc |= {"n": self.n, "seed": self.seed, "rng": RNG_SCHEME}
        return doc | self.extra


def _targets_dict(t: TuningTargets) -> dict:
    return {"phi_min": t.phi_min, "rho_max": t.rho_max, "kappa_min": t.kappa_min}


def _clean(v):
    """JSON-safe copy: non-finite floats become strings, None becomes "undefined"."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if v is None:
        return "undefined"
    if isinstance(v, bool) or isinstance(v, (int, str)):
        return v
    if hasattr(v, "item"):
        return _clean(v.item())
    if isinstance(v, float):
        if math.isnan(v):
            return "undefined"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return str(v)


def canonical_json(doc) -> str:
    return json.dumps(_clean(doc), sort_keys=True, separators=(",", ":"))


def config_hash(doc) -> str:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# reports


def _fmt(v, digits: int = 3) -> str:
    if v is None:
        return "undefined"
    if isinstance(v, str):
        return v
    return f"{v:.{digits}f}"


def _rule_text(result: MethodResult, mode: str) -> str:
    r = result.tuned.get(mode)
    if r is None or not hasattr(r, "rule"):
        return "-"
    rule = r.rule
    if rule.alpha is not None:
        return f"alpha={rule.alpha:.4f} lam={rule.lam:.4g}"
    mu = "inf" if rule.mu is not None and math.isinf(rule.mu) else f"{rule.mu:g}"
    return f"mu={mu} lam={rule.lam:.4g}"


def text_report(report: dict, results: list[MethodResult], modes: Sequence[str]) -> str:
    head = ["method"] + [f"R^S {m}" for m in modes] + ["AUROC", "AUPR", "OSCR"] + [f"rule {m}" for m in modes]
    rows = []
    for r in results:
        risks = [_fmt(r.selective_risk(m)) if r.selective_risk(m) is not None else "unable" for m in modes]
        rows.append([r.method.name] + risks + [_fmt(r.auroc), _fmt(r.aupr), _fmt(r.oscr)] + [_rule_text(r, m) for m in modes])
    widths = [max(len(str(x)) for x in col) for col in zip(head, *rows)]
    line = lambda cells: "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()  # noqa: E731
    out = [line(head), line(["-" * w for w in widths])] + [line(r) for r in rows]
    for m in modes:
        order, unable = ranking(results, m)
        tail = f"; unable: {', '.join(unable)}" if unable else ""
        out.append(f"ranking by selective risk ({m}): {' < '.join(order) or '-'}{tail}")
    for note in report.get("notes", []):
        out.append(f"note: {note}")
    prov = report["provenance"]
    out.append(" ".join(f"{k}={prov[k]}" for k in sorted(prov)))
    return "\n".join(out) + "\n"


def _report(config: RunConfig, results: list[MethodResult], notes: list[str]) -> dict:
    prov = {"config_hash": config_hash(config.hashed()), "schema": SCHEMA, "version": __version__}
    if config.command == "synth":
        prov |= {"seed": config.seed, "n": config.n, "rng": RNG_SCHEME}
    modes = list(config.targets())
    return {
        "schema": SCHEMA,
        "command": config.command,
        "config": config.hashed(),
        "provenance": prov,
        "methods": [r.to_dict() for r in results],
        "ranking": {m: dict(zip(("order", "unable"), ranking(results, m))) for m in modes},
        "notes": notes,
    }


def _write_report(config: RunConfig, results: list[MethodResult], notes: list[str], out: Path) -> dict:
    report = _report(config, results, notes)
    _dump(out / "report.json", report)
    text = text_report(report, results, list(config.targets()))
    (out / "report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return report


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from exc
    return out


# --------------------------------------------------------------------------
# commands


def cmd_synth(config: RunConfig) -> int:
    try:
        setup = load_setup(config.setup_path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load setup: {exc}") from exc
    config.extra = {"setup": setup.to_dict()}
    out = _out_dir(config)
    dataset = synthetic_scores(setup, config.n, config.seed, config.pi)
    write_scores(out / "scores.csv", dataset)
    targets = config.targets()
    results = [evaluate_method(dataset, m, targets, config.weighting) for m in standard_methods(config.d)]
    notes = []
    if dataset.n_ood == 0:
        notes.append("no OOD rows sampled: AUROC, AUPR and OSCR are undefined, precision is 1")
    _write_report(config, results, notes, out)
    return EXIT_OK


def _score_methods(dataset: ScoredDataset, d: int) -> tuple[list[Method], list[str]]:
    methods = [Method("score_r", "r", "threshold on score_r")]
    notes = []
    if dataset.has_score_g:
        methods.append(Method("score_g", "g", "threshold on score_g"))
        methods.append(Method("double", AngularFamily(d), f"double score, {d} angles"))
    else:
        notes.append("score file has no score_g column: score_g and double-score sections omitted")
    return methods, notes


def _load_scores(config: RunConfig) -> ScoredDataset:
    try:
        dataset = read_scores(config.scores_path)
    except FileFormatError as exc:
        raise UsageError(str(exc)) from exc
    config.extra = {"scores_sha256": _file_digest(config.scores_path)}
    return dataset.with_pi(config.pi) if config.pi is not None else dataset


def cmd_tune(config: RunConfig) -> int:
    dataset = _load_scores(config)
    out = _out_dir(config)
    targets = {config.mode: config.targets()[config.mode]}
    methods, notes = _score_methods(dataset, config.d)
    results = [evaluate_method(dataset, m, targets, config.weighting) for m in methods]
    report = _report(config, results, notes)
    report["ranking"] = {config.mode: dict(zip(("order", "unable"), ranking(results, config.mode)))}
    _dump(out / "report.json", report)
    text = text_report(report, results, [config.mode])
    (out / "report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK if any(r.selective_risk(config.mode) is not None for r in results) else EXIT_UNABLE


def _family_curves(dataset: ScoredDataset, method: Method, rho_max: float, weighting) -> dict[str, cv.CurveSeries]:
    family = method.family
    if not isinstance(family, AngularFamily):
        return {
            "roc": cv.roc_curve(dataset, family),
            "pr": cv.pr_curve(dataset, family),
            "rc_at_fpr": cv.rc_at_fpr(dataset, family, rho_max),
            "ccr_fpr": cv.ccr_fpr_curve(dataset, family, weighting),
        }
    grid = cv.default_grid()
    roc, pr, rc, osc = cv.RocEnvelope(grid), cv.PrEnvelope(grid), cv.RcEnvelope(rho_max, grid), cv.BestOscr(weighting)
    scan(dataset, family, [roc, pr, rc, osc])
    meta = {"family": cv.family_label(family), "grid": len(grid)}
    ok_pr, ok_rc = np.isfinite(pr.values), np.isfinite(rc.values)
    ccr_meta = {"family": meta["family"], "weighting": weighting, "alpha": osc.alpha}
    return {
        "roc": cv.CurveSeries("roc", np.column_stack((grid, roc.values)), meta),
        "pr": cv.CurveSeries("pr", np.column_stack((grid[ok_pr], pr.values[ok_pr])), meta | {"pi": float(dataset.pi)}),
        "rc_at_fpr": cv.CurveSeries(
            "rc_at_fpr",
            np.column_stack((grid[ok_rc], rc.values[ok_rc])),
            meta | {"rho_max": float(rho_max), "phi_max": rc.phi_max},
        ),
        "ccr_fpr": cv.CurveSeries("ccr_fpr", osc.points, ccr_meta),
    }


def cmd_curves(config: RunConfig) -> int:
    dataset = _load_scores(config)
    if dataset.n_ood == 0:
        raise UsageError("score file has no OOD rows: ROC, PR and CCR-FPR curves are undefined")
    rho_max = config.targets()["tpr-fpr"].rho_max
    out = _out_dir(config)
    methods, notes = _score_methods(dataset, config.d)
    by_kind: dict[str, list[tuple[str, cv.CurveSeries]]] = {}
    summary = []
    for m in methods:
        series = _family_curves(dataset, m, rho_max, config.weighting)
        for kind, s in series.items():
            (out / f"{kind}_{m.name}.csv").write_text(s.to_csv(), encoding="utf-8")
            by_kind.setdefault(kind, []).append((m.name, s))
        summary.append(
            {
                "method": m.name,
                "auroc": cv.auroc(series["roc"]),
                "aupr": cv.aupr(series["pr"]),
                "oscr": cv.trapezoid_area(series["ccr_fpr"]),
                "phi_max_at_rho_max": series["rc_at_fpr"].meta.get("phi_max"),
            }
        )
    for kind, items in by_kind.items():
        svg = render([s for _, s in items], [name for name, _ in items], title=kind)
        (out / f"{kind}.svg").write_text(svg, encoding="utf-8")
    doc = {
        "schema": SCHEMA,
        "command": "curves",
        "config": config.hashed(),
        "provenance": {"config_hash": config_hash(config.hashed()), "schema": SCHEMA, "version": __version__},
        "curves": summary,
        "notes": notes,
    }
    _dump(out / "curves.json", doc)
    for row in summary:
        print(
            f"{row['method']}: AUROC {_fmt(row['auroc'])}  AUPR {_fmt(row['aupr'])}  "
            f"OSCR {_fmt(row['oscr'])}  phi_max@rho_max={rho_max:g} {_fmt(row['phi_max_at_rho_max'])}"
        )
    return EXIT_OK


def cmd_lp(config: RunConfig) -> int:
    try:
        p_id, p_ood, risk = read_lp_instance(config.instance_path)
    except FileFormatError as exc:
        raise UsageError(str(exc)) from exc
    rho_max = config.rho_max
    if config.mode == "prec-recall":
        rho_max = prec_recall_rho_max(config.phi_min, config.kappa_min, config.pi)
    try:
        instance = LpInstance(p_id, p_ood, risk, config.phi_min, rho_max)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    config.extra = {"instance_sha256": _file_digest(config.instance_path)}
    out = _out_dir(config)
    sol = solve(instance)
    doc = {
        "schema": SCHEMA,
        "command": "lp",
        "config": config.hashed(),
        "provenance": {"config_hash": config_hash(config.hashed()), "schema": SCHEMA, "version": __version__},
        "status": sol.status,
        "rho_max": rho_max,
        "id_mass_total": instance.scale,
    }
    if sol.status != "optimal":
        _dump(out / "lp_report.json", doc)
        print("infeasible")
        return EXIT_UNABLE
    write_lp_solution(out / "solution.csv", sol)
    doc["objective"] = sol.objective
    try:
        band = verify_band_structure(instance, sol)
        doc["structure"] = band.to_dict()
        verdict = band.summary()
        code = EXIT_OK
    except StructureViolation as exc:
        doc["structure"] = {"consistent": False, "error": str(exc), "items": exc.indices}
        verdict = f"inconsistent: {exc}"
        code = EXIT_USAGE
    _dump(out / "lp_report.json", doc)
    print(f"optimal objective {sol.objective!r}; {verdict}")
    return code


COMMANDS = {"synth": cmd_synth, "tune": cmd_tune, "curves": cmd_curves, "lp": cmd_lp}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oodreject", description="Selective classification with OOD rejection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--mode", choices=("tpr-fpr", "prec-recall"), default="tpr-fpr")
        p.add_argument("--phi-min", type=float, help="minimal TPR (coverage); default 0.7")
        p.add_argument("--rho-max", type=float, help="maximal FPR; default 0.2")
        p.add_argument("--kappa-min", type=float, help="minimal precision; default 0.9")
        p.add_argument("--pi", type=float, help="OOD prior used for precision")
        p.add_argument("--d", type=int, default=360, help="angles in the double-score grid")
        p.add_argument("--weighting", choices=("plain", "coverage"), default="plain", help="CCR used by OSCR")
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("synth", help="sample the synthetic benchmark and evaluate methods A-D")
    p.add_argument("--setup", help="setup JSON (default: shipped setup)")
    p.add_argument("--n", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=1)
    common(p)

    p = sub.add_parser("tune", help="tune thresholds on a score file")
    p.add_argument("--scores", required=True)
    common(p)

    p = sub.add_parser("curves", help="emit ROC, PR, RC-at-FPR and CCR-FPR curves")
    p.add_argument("--scores", required=True)
    common(p)

    p = sub.add_parser("lp", help="solve the finite bounded TPR-FPR linear program")
    p.add_argument("instance", help="CSV with columns p_id,p_ood,risk_mass")
    common(p)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=args.command,
        setup_path=getattr(args, "setup", None),
        scores_path=getattr(args, "scores", None),
        instance_path=getattr(args, "instance", None),
        mode=args.mode,
        phi_min=args.phi_min,
        rho_max=args.rho_max,
        kappa_min=args.kappa_min,
        pi=args.pi,
        n=getattr(args, "n", 200_000),
        seed=getattr(args, "seed", 1),
        d=args.d,
        output_dir=args.out,
        weighting=args.weighting,
    )


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = config_from_args(args)
    try:
        config.validate()
        return COMMANDS[config.command](config)
    except UsageError as exc:
        print(f"oodreject {config.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
