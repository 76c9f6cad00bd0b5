import math

import pytest

from conftest import requires_solver
from molkit.milp_core import (
    MilpError,
    MilpModel,
    SolverUnavailable,
    check_assignment,
    lp_text,
    parse_solution,
    run_solver,
    solve,
    write_assignment,
)


def small_model(rhs=3):
    m = MilpModel("small")
    with m.family("vars"):
        m.integer("x", 0, 3)
        m.integer("y", 0, 3)
        m.binary("z")
        m.continuous("w", -2.5)
    with m.family("rows"):
        m.add_constraint("sum", [("x", 1), ("y", 2)], "=", rhs)
        m.add_constraint("link", {"w": 1, "z": -4}, "<=", 0)
    return m


def test_lp_text_layout():
    text = lp_text(small_model())
    assert " sum: x + 2 y = 3" in text
    assert " link: w - 4 z <= 0" in text
    assert " -2.5 <= w <= inf" not in text and " w >= -2.5" in text
    assert "Generals\nx y\n" in text and "Binaries\nz\n" in text
    assert text.rstrip().endswith("End")


def test_long_rows_are_wrapped():
    m = MilpModel()
    for i in range(200):
        m.continuous(f"var_{i}", 0, 1)
    m.add_constraint("big", [(f"var_{i}", 1) for i in range(200)], "<=", 5)
    assert max(len(line) for line in lp_text(m).splitlines()) <= 200


def test_builder_errors():
    m = small_model()
    with pytest.raises(MilpError, match="duplicate"):
        m.integer("x", 0, 1)
    with pytest.raises(MilpError, match="undeclared"):
        m.add_constraint("bad", [("nope", 1)], "<=", 0)
    with pytest.raises(MilpError, match="invalid"):
        m.continuous("2x")
    with pytest.raises(MilpError, match="exceeds"):
        m.integer("q", 2, 1)


def test_counts_by_family():
    c = small_model().counts()
    assert c["variables"] == 4 and c["constraints"] == 2
    assert c["families"]["vars"]["variables"] == 4
    assert c["families"]["rows"]["constraints"] == 2
    assert c["by_kind"] == {"binary": 1, "integer": 2, "continuous": 1}


def test_check_assignment():
    m = small_model()
    assert check_assignment(m, {"x": 1, "y": 1, "z": 1, "w": 3}).ok
    rep = check_assignment(m, {"x": 0.5, "y": 1, "z": 0, "w": 3})
    assert [n for n, _ in rep.violations] == ["sum", "link"]
    assert [n for n, _ in rep.integrality] == ["x"]
    assert [n for n, _ in check_assignment(m, {"x": 3, "y": 0, "w": -3}).bounds] == ["w"]


def test_parse_name_value_file(tmp_path):
    m = small_model()
    p = tmp_path / "a.sol"
    write_assignment({"x": 1, "y": 1.0}, p)
    sol = parse_solution(p, m)
    assert sol.values == {"x": 1.0, "y": 1.0, "z": 0.0, "w": 0.0}
    assert len(sol.warnings) == 2


def test_parse_cbc_file(tmp_path):
    p = tmp_path / "cbc.sol"
    p.write_text("Optimal - objective value 0.00000000\n"
                 "      0 x                      1                       0\n"
                 "**    1 y                      1                       0\n")
    sol = parse_solution(p, small_model())
    assert sol.feasible and sol.values["y"] == 1
    p.write_text("Infeasible - objective value 0\n")
    assert parse_solution(p, small_model()).status == "infeasible"
    p.write_text("Stopped on time - objective value 0\n")
    assert parse_solution(p, small_model()).status == "timeout"


def test_unknown_variable_in_solution(tmp_path):
    p = tmp_path / "a.sol"
    p.write_text("ghost 1\n")
    with pytest.raises(MilpError, match="unknown variable"):
        parse_solution(p, small_model())


def test_missing_solver_is_reported(tmp_path, monkeypatch):
    monkeypatch.delenv("MOLKIT_SOLVER_CMD", raising=False)
    with pytest.raises(SolverUnavailable):
        run_solver(tmp_path / "a.lp", tmp_path / "a.sol", "no-such-solver-binary {lp} {sol}")
    monkeypatch.setenv("PATH", str(tmp_path))
    with pytest.raises(SolverUnavailable):
        run_solver(tmp_path / "a.lp", tmp_path / "a.sol")


@requires_solver
def test_solver_round_trip(tmp_path):
    sol = solve(small_model(), tmp_path, timeout=30)
    assert sol.feasible
    assert check_assignment(small_model(), sol.values).ok
    assert solve(small_model(rhs=7.5), tmp_path, timeout=30).status == "infeasible"


def test_bounds_survive_the_writer():
    m = MilpModel()
    m.continuous("a")
    m.continuous("b", 1, 1)
    m.continuous("c", -math.inf, 4)
    text = lp_text(m)
    assert " a free" in text and " b = 1" in text and " -inf <= c <= 4" in text


def test_status_header_round_trip(tmp_path):
    p = tmp_path / "a.sol"
    write_assignment({"x": 1, "y": 1, "z": 0, "w": 0}, p, status="optimal")
    sol = parse_solution(p, small_model())
    assert sol.feasible and not sol.warnings
