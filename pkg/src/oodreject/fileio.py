"""Reading and writing score files, LP instances and LP solutions."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .finite_lp import LpSolution

SCORE_HEADER = ("id", "is_ood", "loss", "score_r")
SCORE_HEADER_G = SCORE_HEADER + ("score_g",)
LP_HEADER = ("p_id", "p_ood", "risk_mass")


class FileFormatError(ValueError):
    """Malformed input file; ``line`` is 1-based and counts the header."""

    def __init__(self, path, line: int | None, message: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


def _float(path, line: int, name: str, text: str, allow_inf: bool = False) -> float:
    try:
        v = float(text)
    except ValueError:
        raise FileFormatError(path, line, f"{name} is not a number: {text!r}") from None
    if math.isnan(v) or (math.isinf(v) and not allow_inf):
        raise FileFormatError(path, line, f"{name} must be finite, got {text!r}")
    return v


def _read_rows(path):
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise FileFormatError(path, None, f"cannot read file ({exc.strerror})") from exc
    except UnicodeDecodeError as exc:
        raise FileFormatError(path, None, "file is not valid UTF-8") from exc
    if not rows:
        raise FileFormatError(path, 1, "missing header")
    return path, rows


def read_scores(path):
    """Load a score CSV into a :class:`~oodreject.posthoc.ScoredDataset`.

    ``score_g`` may be ``inf`` (zero ID density); every other value must be
    finite.  Raises :class:`FileFormatError` naming the offending line.
    """
    from .posthoc import ScoredDataset

    path, rows = _read_rows(path)
    header = tuple(h.strip() for h in rows[0])
    if header not in (SCORE_HEADER, SCORE_HEADER_G):
        raise FileFormatError(
            path, 1, f"expected header {','.join(SCORE_HEADER)}[,score_g], got {','.join(header)}"
        )
    with_g = len(header) == 5
    ids, is_ood, loss, sr, sg = [], [], [], [], []
    for k, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise FileFormatError(path, k, f"expected {len(header)} fields, got {len(row)}")
        flag = row[1].strip()
        if flag not in ("0", "1"):
            raise FileFormatError(path, k, f"is_ood must be 0 or 1, got {flag!r}")
        ell = _float(path, k, "loss", row[2])
        if ell < 0:
            raise FileFormatError(path, k, "loss must be nonnegative")
        if flag == "1" and ell != 0:
            raise FileFormatError(path, k, "loss must be 0 on OOD rows")
        ids.append(row[0])
        is_ood.append(flag == "1")
        loss.append(ell)
        sr.append(_float(path, k, "score_r", row[3]))
        if with_g:
            sg.append(_float(path, k, "score_g", row[4], allow_inf=True))
    if not ids:
        raise FileFormatError(path, None, "empty dataset")
    try:
        return ScoredDataset(
            score_r=np.array(sr),
            is_ood=np.array(is_ood, dtype=bool),
            loss=np.array(loss),
            score_g=np.array(sg) if with_g else None,
            ids=tuple(ids),
        )
    except ValueError as exc:
        raise FileFormatError(path, None, str(exc)) from exc


def _num(v: float) -> str:
    return repr(float(v))


def write_scores(path, dataset) -> None:
    with_g = dataset.has_score_g
    ids = dataset.ids if dataset.ids is not None else range(len(dataset))
    lines = [",".join(SCORE_HEADER_G if with_g else SCORE_HEADER)]
    for k, ident in enumerate(ids):
        row = [str(ident), "1" if dataset.is_ood[k] else "0", _num(dataset.loss[k]), _num(dataset.score_r[k])]
        if with_g:
            row.append(_num(dataset.score_g[k]))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_lp_instance(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    path, rows = _read_rows(path)
    header = tuple(h.strip() for h in rows[0])
    if header != LP_HEADER:
        raise FileFormatError(path, 1, f"expected header {','.join(LP_HEADER)}, got {','.join(header)}")
    cols: list[list[float]] = [[], [], []]
    for k, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise FileFormatError(path, k, f"expected 3 fields, got {len(row)}")
        for j, name in enumerate(LP_HEADER):
            v = _float(path, k, name, row[j])
            if v < 0:
                raise FileFormatError(path, k, f"{name} must be nonnegative")
            cols[j].append(v)
    if not cols[0]:
        raise FileFormatError(path, None, "no items")
    return tuple(np.array(c) for c in cols)


def write_lp_solution(path, solution: LpSolution) -> None:
    lines = ["index,acceptance"]
    lines += [f"{i},{_num(v)}" for i, v in enumerate(solution.acceptance)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
