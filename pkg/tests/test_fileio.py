from __future__ import annotations

import math

import numpy as np
import pytest

from oodreject.finite_lp import LpInstance, solve
from oodreject.fileio import (
    FileFormatError,
    read_lp_instance,
    read_scores,
    write_lp_solution,
    write_scores,
)
from oodreject.posthoc import ScoredDataset


def write(tmp_path, text, name="s.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestScores:
    def test_roundtrip_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        g = rng.random(50)
        g[3] = math.inf
        ood = rng.random(50) < 0.3
        loss = np.where(ood, 0.0, rng.integers(0, 2, 50).astype(float))
        ds = ScoredDataset(score_r=rng.normal(size=50), is_ood=ood, loss=loss, score_g=g)
        p = tmp_path / "s.csv"
        write_scores(p, ds)
        back = read_scores(p)
        assert back.score_r.tobytes() == ds.score_r.tobytes()
        assert back.score_g.tobytes() == ds.score_g.tobytes()
        assert np.array_equal(back.is_ood, ds.is_ood)
        assert back.ids == tuple(str(i) for i in range(50))

    def test_without_score_g(self, tmp_path):
        ds = read_scores(write(tmp_path, "id,is_ood,loss,score_r\na,0,1,0.5\nb,1,0,0.7\n"))
        assert not ds.has_score_g
        assert ds.ids == ("a", "b")
        assert ds.n_ood == 1

    @pytest.mark.parametrize(
        "body, line, fragment",
        [
            ("a,2,0,0.1\n", 2, "is_ood"),
            ("a,0,0,0.1\nb,0,-1,0.2\n", 3, "nonnegative"),
            ("a,1,1,0.1\n", 2, "OOD rows"),
            ("a,0,0,nan\n", 2, "finite"),
            ("a,0,0,inf\n", 2, "finite"),
            ("a,0,0,x\n", 2, "not a number"),
            ("a,0,0\n", 2, "fields"),
        ],
    )
    def test_bad_rows_name_the_line(self, tmp_path, body, line, fragment):
        p = write(tmp_path, "id,is_ood,loss,score_r\n" + body)
        with pytest.raises(FileFormatError) as exc:
            read_scores(p)
        assert exc.value.line == line
        assert f"{p}:{line}:" in str(exc.value)
        assert fragment in str(exc.value)

    def test_bad_header(self, tmp_path):
        with pytest.raises(FileFormatError, match=":1:"):
            read_scores(write(tmp_path, "id,label,loss,score_r\n"))

    def test_empty(self, tmp_path):
        with pytest.raises(FileFormatError, match="empty dataset"):
            read_scores(write(tmp_path, "id,is_ood,loss,score_r\n"))
        with pytest.raises(FileFormatError, match="missing header"):
            read_scores(write(tmp_path, ""))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileFormatError, match="cannot read"):
            read_scores(tmp_path / "nope.csv")


class TestLpFiles:
    def test_read(self, tmp_path):
        p_id, p_ood, r = read_lp_instance(write(tmp_path, "p_id,p_ood,risk_mass\n0.5,0.5,0\n0.5,0.5,0.05\n"))
        assert p_id.tolist() == [0.5, 0.5]
        assert r.tolist() == [0.0, 0.05]

    def test_negative(self, tmp_path):
        with pytest.raises(FileFormatError, match=":3:.*p_ood"):
            read_lp_instance(write(tmp_path, "p_id,p_ood,risk_mass\n0.5,0.5,0\n0.5,-0.5,0\n"))

    def test_solution_file(self, tmp_path):
        sol = solve(LpInstance([0.25] * 4, [0.25] * 4, [0.0, 0.025, 0.05, 0.1], 0.5, 1.0))
        p = tmp_path / "sol.csv"
        write_lp_solution(p, sol)
        lines = p.read_text().splitlines()
        assert lines[0] == "index,acceptance"
        assert [float(x.split(",")[1]) for x in lines[1:]] == sol.acceptance.tolist()
