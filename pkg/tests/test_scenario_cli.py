import json
from pathlib import Path

import pytest

from algebroid_hj import cli
from algebroid_hj.scenario import (
    CATALOG_ORDER, ScenarioError, catalog, get_scenario, load_scenario, scenario_from_dict, summary,
)

MINIMAL = {
    "name": "line",
    "base_dim": 1,
    "rank": 1,
    "domain": [[-1, 1]],
    "anchor": [["1"]],
    "hamiltonian": "(mu1^2 + x1^2)/2",
    "sections": {"bad": ["x1"]},
}


def _doc(**changes):
    doc = json.loads(json.dumps(MINIMAL))
    doc.update(changes)
    return doc


def test_minimal_scenario_loads():
    s = scenario_from_dict(_doc())
    assert s.m == 1 and s.n == 1 and list(s.hamiltonians) == ["H"]
    assert s.section("bad").hamiltonian == "H"
    assert s.section("bad").domain == ((-1.0, 1.0),)


def test_structure_order_error():
    doc = _doc(rank=2, anchor=[["1"], ["0"]], hamiltonian="mu1",
               structure=[{"alpha": 2, "beta": 1, "gamma": 1, "expr": "1"}], sections={})
    with pytest.raises(ScenarioError, match="alpha must be < beta") as info:
        scenario_from_dict(doc, "x.json")
    assert "structure[0]" in info.value.where


def test_unknown_identifier_error():
    with pytest.raises(ScenarioError, match="unknown identifier mu2") as info:
        scenario_from_dict(_doc(hamiltonian="mu2^2"))
    assert "hamiltonians.H" in info.value.where


@pytest.mark.parametrize("changes,where", [
    ({"anchor": [["1", "2"]]}, "anchor"),
    ({"sections": {"s": ["x1", "x1"]}}, "sections.s.components"),
    ({"seed": -1}, "seed"),
    ({"tolerances": {"bogus": 1}}, "tolerances.bogus"),
    ({"domain": [[1, 0]]}, "domain"),
    ({"morphisms": {"m": {"components": ["mu1"], "energy": "e"}}}, "morphisms.m.energy"),
    ({"schema": 7}, "schema"),
])
def test_schema_errors_are_located(changes, where):
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(_doc(**changes))
    assert where in info.value.where


def test_load_from_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(_doc()))
    assert load_scenario(path).name == "line"
    path.write_text("{not json")
    with pytest.raises(ScenarioError, match="invalid JSON"):
        load_scenario(path)


def test_catalog_contents():
    entries = catalog()
    assert len(entries) >= 6
    assert [s.name for s in entries] == list(CATALOG_ORDER)
    s = get_scenario("canonical_r1")
    assert s.m == 1 and s.n == 1
    so3 = get_scenario("so3")
    assert so3.m == 0 and len(so3.algebroid.structure) == 3
    assert any(s.time_dependent for s in entries)
    for s in entries:
        assert s.sections_with_role("hj_solution") or s.sections_with_role("relative_equilibrium") or \
            s.time_dependent
        assert s.morphisms_with_role("symplectic") and s.morphisms_with_role("non_symplectic")
        assert summary(s)["name"] == s.name


def test_time_dependent_sampling():
    s = get_scenario("td_free_particle")
    pts = s.sample_base(5, s.rng())
    assert pts.shape == (5, 2) and ((pts[:, 0] >= 0) & (pts[:, 0] <= 1)).all()


def test_unknown_scenario():
    with pytest.raises(ScenarioError):
        get_scenario("no_such_thing")


# ---------------------------------------------------------------- CLI

def test_cli_check_passes_and_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(["check", "so3", "--out", str(a)]) == 0
    assert cli.main(["check", "so3", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["pass"] and doc["scenario"] == "so3"
    assert {r["check"] for r in doc["reports"]} >= {"validate_algebroid", "omega_oracle"}
    assert "PASS" in capsys.readouterr().out


def test_cli_seed_changes_samples(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    cli.main(["hj", "canonical_r1", "--theorem", "type1", "--gamma", "non_solution", "--out", str(a)])
    cli.main(["hj", "canonical_r1", "--theorem", "type1", "--gamma", "non_solution", "--seed", "99",
              "--out", str(b)])
    assert a.read_bytes() != b.read_bytes()


def test_cli_exit_codes(capsys):
    assert cli.main(["hj", "canonical_r1", "--theorem", "type1", "--gamma", "hj_solution"]) == 0
    assert cli.main(["hj", "canonical_r1", "--theorem", "type1", "--gamma", "non_solution"]) == 1
    assert cli.main(["hj", "nope", "--theorem", "type1", "--gamma", "x"]) == 2
    assert cli.main(["hj", "canonical_r1", "--theorem", "type1", "--gamma", "missing"]) == 2
    assert cli.main(["hj", "canonical_r1", "--theorem", "type2", "--gamma", "hj_solution"]) == 2
    assert cli.main(["hj", "td_free_particle", "--theorem", "type1", "--gamma", "constant"]) == 2
    err = capsys.readouterr().err
    assert "error:" in err


def test_cli_usage_error_exits_2():
    with pytest.raises(SystemExit) as info:
        cli.main(["hj", "so3", "--theorem", "7", "--gamma", "zero"])
    assert info.value.code == 2


def test_cli_type2_notes_non_symplectic(capsys):
    code = cli.main(["hj", "canonical_r1", "--theorem", "type2", "--gamma", "hj_solution",
                     "--epsilon", "scale2", "--samples", "5"])
    assert code in (0, 1)
    assert "symplectic" in capsys.readouterr().err


def test_cli_json_to_stdout(capsys):
    assert cli.main(["hj", "so3", "--theorem", "5", "--gamma", "zero", "--out", "-"]) == 0
    out = capsys.readouterr().out
    doc = json.loads(out[out.index("{"):])
    assert doc["command"] == "hj --theorem 5" and doc["reports"][0]["check"] == "theorem5"


def test_cli_td(capsys):
    assert cli.main(["td", "td_free_particle", "--theorem", "type1", "--gamma", "focusing"]) == 0
    assert cli.main(["td", "td_free_particle", "--theorem", "type1", "--gamma", "non_solution"]) == 1
    assert cli.main(["td", "canonical_r1", "--theorem", "type1", "--gamma", "hj_solution"]) == 0


def test_cli_integrate_csv(tmp_path):
    out = tmp_path / "traj.csv"
    assert cli.main(["integrate", "canonical_r1", "--hamiltonian", "oscillator", "--start", "1,0",
                     "--t1", "0.1", "--dt", "0.05", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,x1,mu1,H" and len(lines) == 4
    assert cli.main(["integrate", "canonical_r1", "--start", "1", "--t1", "0.1"]) == 2


def test_cli_integrate_time_dependent(tmp_path):
    out = tmp_path / "traj.csv"
    assert cli.main(["integrate", "td_free_particle", "--hamiltonian", "driven", "--start", "0,1",
                     "--t1", "0.1", "--dt", "0.05", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0].startswith("t,")


def test_cli_catalog(tmp_path, capsys):
    assert cli.main(["catalog", "--list"]) == 0
    listing = capsys.readouterr().out
    assert all(name in listing for name in CATALOG_ORDER)
    assert cli.main(["catalog", "--export", str(tmp_path)]) == 0
    for name in CATALOG_ORDER:
        assert load_scenario(tmp_path / f"{name}.json").name == name


def test_cli_check_on_exported_file(tmp_path):
    cli.main(["catalog", "--export", str(tmp_path)])
    assert cli.main(["check", str(tmp_path / "heisenberg.json"), "--samples", "10"]) == 0


def test_cli_check_corrupted_fails():
    assert cli.main(["check", str(Path(__file__).parent / "data" / "corrupted_heisenberg.json"), "--samples", "10"]) == 1


def test_readme_gauge_model_is_a_valid_algebroid():
    text = (Path(__file__).parents[1] / "README.md").read_text()
    start = text.index('{\n  "name": "gauge_r_so3"')
    doc = json.loads(text[start:text.index("\n}\n", start) + 2])
    s = scenario_from_dict(doc)
    from algebroid_hj.algebroid import validate_algebroid
    report = validate_algebroid(s.algebroid, s.sample_base(50, s.rng()))
    assert report.passed and report.max <= 1e-12
    so3 = get_scenario("so3").algebroid.structure_at([])
    assert (s.algebroid.structure_at([0.3])[1:, 1:, 1:] == so3).all()
