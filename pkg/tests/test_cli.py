import io
import json

import pytest

from obsmanifold.cli import demo_text, main
from obsmanifold.instance import parse_instance
from obsmanifold.suite import SuiteOptions, report_from_dict, run_suite

BROKEN_A2 = """\
[carrier M]
points a b

[observer mu]
carrier M
value a 1.0
value b 1.0

[observer l1]
carrier M
value a 0.2
value b 0.6

[observer l2]
carrier M
value a 0.5
value b 0.3

[observer zero]
carrier M
value a 0.0
value b 0.0

[topology T]
observer mu
mode given
members zero mu l1 l2
"""


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_demo_passes(capsys):
    code, out, _ = run(capsys, "all", "--demo")
    assert code == 0
    assert "0 failed" in out


def test_demo_json(capsys):
    code, out, _ = run(capsys, "all", "--demo", "--json")
    data = json.loads(out)
    assert code == 0 and data["command"] == "all"
    axioms = {c["axiom"] for c in data["checks"]}
    assert {"a1", "a2", "b1", "b2", "c1", "c4", "selective"} <= axioms
    assert report_from_dict(data).to_json() == out.rstrip("\n")


def test_broken_a2_exits_1(tmp_path, capsys):
    path = tmp_path / "broken.inst"
    path.write_text(BROKEN_A2)
    code, out, _ = run(capsys, "validate-topology", str(path), "--json")
    assert code == 1
    failed = [c for c in json.loads(out)["checks"] if c["verdict"] == "fail"]
    a2 = next(c for c in failed if c["axiom"] == "a2")
    assert {a2["witness"]["left"]["a"][0], a2["witness"]["right"]["a"][0]} == {0.2, 0.5}


def test_input_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.inst"
    bad.write_text("[carrier M]\npoints a\n\n[observer mu]\ncarrier M\nvalue a 1.2\n")
    code, _, err = run(capsys, "all", str(bad))
    assert code == 2 and "line 6" in err
    code, _, err = run(capsys, "all", str(tmp_path / "missing.inst"))
    assert code == 2
    code, _, _ = run(capsys, "all")
    assert code == 2


def test_stdin(monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO(BROKEN_A2))
    code, _, _ = run(capsys, "validate-topology", "-")
    assert code == 1


def test_diff_check_flags(capsys):
    code, out, _ = run(capsys, "diff-check", "--demo", "--point", "a", "--order", "inf", "--alpha", "0.5", "--json")
    assert code == 0
    ids = [c["id"] for c in json.loads(out)["checks"]]
    assert "diff[ident@a,r=inf,alpha=0.5]:c4" in ids
    with pytest.raises(SystemExit):
        main(["diff-check", "--demo", "--order", "0"])


def test_tolerance_env(monkeypatch, capsys):
    monkeypatch.setenv("OBSMANIFOLD_TOL", "eq=1e-9,deriv=1e-5")
    code, out, _ = run(capsys, "validate-structure", "--demo", "--json")
    assert code == 0
    assert json.loads(out)["tolerance"]["deriv_tol"] == 1e-5
    monkeypatch.setenv("OBSMANIFOLD_TOL", "epsilon=1")
    code, _, _ = run(capsys, "validate-structure", "--demo")
    assert code == 2


def test_seed_sweep_is_deterministic():
    inst = parse_instance(demo_text())
    a = run_suite(inst, "validate-structure", SuiteOptions(seed=7)).to_json()
    b = run_suite(inst, "validate-structure", SuiteOptions(seed=7, jobs=3)).to_json()
    assert a == b and "random[7:0]" in a


@pytest.mark.parametrize("command", ["validate-topology", "validate-structure", "validate-selective", "product",
                                     "diff-check", "tangent", "dynamics"])
def test_each_command_on_demo(command, capsys):
    code, out, _ = run(capsys, command, "--demo")
    assert code == 0, out
