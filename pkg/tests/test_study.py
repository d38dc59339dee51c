import numpy as np
import pytest

from wgbakhvalov.assembly import SolverError
from wgbakhvalov.problems import example_5_1, patch_problem
from wgbakhvalov.study import (
    CSV_HEADER, StudyResult, StudyRow, csv_text, emit, format_error, markdown_table, read_csv,
    run_study, write_csv,
)


@pytest.fixture(scope="module")
def ex1_k1_small():
    return run_study(1, 1, [8, 16], [1e-6])


def test_example1_k1_first_rows(ex1_k1_small):
    (r8, r16) = ex1_k1_small.rows
    assert r8.error == pytest.approx(3.66e-1, rel=0.01)
    assert r16.error == pytest.approx(1.73e-1, rel=0.01)
    assert r8.rate == 0.0
    assert r16.rate == pytest.approx(1.08, abs=0.02)
    assert csv_text(ex1_k1_small).splitlines()[1] == "1,1e-06,8,3.67E-01,0.00"


def test_example2_k2_rows():
    res = run_study(2, 2, [8, 16], [1e-8])
    errs = [r.error for r in res.rows]
    assert errs[0] == pytest.approx(1.58e-2, rel=0.01)
    assert errs[1] == pytest.approx(2.91e-3, rel=0.01)
    assert res.rows[1].rate == pytest.approx(2.44, abs=0.03)


def test_patch_problem_study_exact():
    res = run_study(lambda eps, k, sigma: patch_problem(eps, k=k, sigma=sigma), 2, [4, 8],
                    [1e-3])
    assert max(r.error for r in res.rows) <= 1e-9


def test_sigma_default_and_metadata(ex1_k1_small):
    assert ex1_k1_small.meta["sigma"] == 2.0
    assert run_study(1, 2, [4], [1e-4]).meta["sigma"] == 4.0
    assert ex1_k1_small.meta["quad_order"] == 6
    for c in ex1_k1_small.cells:
        assert c.residual < 1e-10 and c.n_dofs > 0 and c.failure is None
    # library default elsewhere is the theoretical sigma = k + 1
    assert example_5_1(1e-6, k=1).sigma == 2.0 and example_5_1(1e-6, k=2).sigma == 3.0


def test_rows_ordered_by_eps_then_n():
    res = run_study(2, 1, [8, 16], [1e-8, 1e-6])
    assert [(r.eps, r.N) for r in res.rows] == [(1e-6, 8), (1e-6, 16), (1e-8, 8), (1e-8, 16)]
    assert [r.rate == 0.0 for r in res.rows] == [True, False, True, False]


def test_invalid_n_list():
    with pytest.raises(ValueError):
        run_study(1, 1, [8, 12], [1e-6])
    with pytest.raises(ValueError):
        run_study(1, 1, [7], [1e-6])


def test_empty_result_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    write_csv(StudyResult(), path)
    assert path.read_bytes() == b"k,eps,N,error,rate\n"
    assert read_csv(path) == []


def test_csv_roundtrip_and_bytes(tmp_path, ex1_k1_small):
    path = tmp_path / "t1.csv"
    write_csv(ex1_k1_small, path)
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    assert raw.decode("utf-8").splitlines()[0] == ",".join(CSV_HEADER)
    back = read_csv(path)
    # rows survive at the printed precision
    for a, b in zip(back, ex1_k1_small.rows):
        assert (a.k, a.eps, a.N) == (b.k, b.eps, b.N)
        assert a.error == float(format_error(b.error))
        assert a.rate == round(b.rate, 2)
    again = StudyResult(rows=back)
    assert csv_text(again) == raw.decode()


def test_study_deterministic(ex1_k1_small):
    assert csv_text(run_study(1, 1, [8, 16], [1e-6])) == csv_text(ex1_k1_small)


def test_concurrent_cells_same_output():
    a = run_study(2, 1, [8, 16], [1e-6, 1e-8])
    b = run_study(2, 1, [8, 16], [1e-6, 1e-8], jobs=3)
    assert csv_text(a) == csv_text(b)


def test_markdown_layout(ex1_k1_small):
    md = markdown_table(ex1_k1_small)
    lines = md.splitlines()
    assert lines[0] == "k = 1"
    assert lines[2] == "| N | eps=1e-06 | rate |"
    assert lines[4] == "| 8 | 3.67E-01 | 0.00 |"
    assert lines[5].startswith("| 16 | 1.73E-01 | 1.0")


def test_emit_with_plot_files(tmp_path, ex1_k1_small):
    out = tmp_path / "t1.md"
    paths = emit(ex1_k1_small, out, "md", tmp_path / "plots")
    assert out.read_text().startswith("k = 1")
    assert [p.rsplit("/", 1)[1] for p in map(str, paths)] == ["t1_k1_eps1e-06.dat"]
    data = np.loadtxt(paths[0])
    np.testing.assert_array_equal(data[:, 0], [8, 16])
    np.testing.assert_array_equal(data[:, 1], [r.error for r in ex1_k1_small.rows])
    with pytest.raises(ValueError):
        emit(ex1_k1_small, tmp_path / "x", "json")


def test_failed_cell_is_recorded(monkeypatch):
    import wgbakhvalov.study as study

    real = study.solve_system

    def flaky(system, condensed=True):
        if system.size == 16 * 16 * 4 + 2 * 16 * 15 * 2:
            raise SolverError("forced failure")
        return real(system, condensed=condensed)

    monkeypatch.setattr(study, "solve_system", flaky)
    res = run_study(1, 1, [8, 16, 32], [1e-6])
    assert [r.N for r in res.rows] == [8, 32]
    assert [c.N for c in res.failed] == [16]
    assert "forced failure" in res.failed[0].failure
    # a gap in the sequence leaves no neighbour to compare with
    assert [r.rate for r in res.rows] == [0.0, 0.0]


def test_rows_are_plain_records():
    r = StudyRow(1, 1e-6, 8, 0.5, 0.0)
    assert csv_text(StudyResult(rows=[r])).splitlines()[1] == "1,1e-06,8,5.00E-01,0.00"
