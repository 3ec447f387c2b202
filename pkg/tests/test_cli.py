import csv
import json

import pytest

from wittenlab.cli import (
    build_parser,
    child_seeds,
    config_of,
    config_to_argv,
    expand_registered_potential,
    load_potential,
    main,
    parse_box,
    parse_points,
    report_body,
    run,
)
from wittenlab.poly import Polynomial


def test_registered_potentials():
    p = expand_registered_potential("vdelta:1")
    assert p.V.terms == {(2, 0): 1.0, (0, 2): 1.0, (2, 2): 1.0}
    assert p.k == 4
    x1, x2 = Polynomial.variables(2)
    assert expand_registered_potential("phidelta:-1").V == x1**4 - 2 * x1**2 * x2
    assert expand_registered_potential("vdelta:0").V == x1**2 * x2**2
    for bad in ("wdelta:1", "vdelta:abc", "vdelta:nan"):
        with pytest.raises(ValueError):
            expand_registered_potential(bad)


def test_load_potential_from_file(tmp_path):
    f = tmp_path / "p.json"
    f.write_text(json.dumps({"dimension": 1, "terms": [{"exponents": [4], "coeff": 1.0}]}))
    assert load_potential(str(f)).k == 4
    assert load_potential(str(f), k=2).k == 2


def test_parsers():
    assert parse_box("-4:4,-1:2") == [(-4.0, 4.0), (-1.0, 2.0)]
    with pytest.raises(ValueError):
        parse_box("1:0")
    assert parse_points("0,1;2,3") == [[0.0, 1.0], [2.0, 3.0]]
    assert len(parse_points("-1:1:3x-1:1:3")) == 9


def test_exit_codes(tmp_path, capsys):
    assert main(["check-criterion", "--potential", "vdelta:1"]) == 0
    assert main(["check-criterion", "--potential", "phidelta:-1"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"dimension": 2, "terms": [')
    assert main(["check-criterion", "--potential", str(bad)]) == 1
    dup = tmp_path / "dup.json"
    dup.write_text(json.dumps({"dimension": 1, "terms": [{"exponents": [1], "coeff": 1}] * 2}))
    assert main(["check-criterion", "--potential", str(dup)]) == 1
    assert main(["mtau", "--tau", "2", "--tau0", "1", "--C", "1"]) == 1


def test_witnesses_in_report(tmp_path):
    out = tmp_path / "r.json"
    assert main(["check-criterion", "--potential", "phidelta:-1", "--out", str(out)]) == 2
    rep = json.loads(out.read_text())
    wit = rep["reports"][0]["witnesses"]
    assert wit and all(w["x"][0] == 0.0 and w["x"][1] < 0 for w in wit)


def test_reports_reproducible_and_config_round_trips(capsys):
    argv = ["check-criterion", "--potential", "vdelta:0", "--delta1", "0.2", "--seed", "7"]
    a, _ = run(argv)
    b, _ = run(argv)
    assert report_body(a) == report_body(b)
    assert "wall_time_s" in a["meta"]
    again = config_to_argv(a["config"])
    assert config_of(build_parser().parse_args(again)) == a["config"]
    c, _ = run(again)
    assert report_body(c) == report_body(a)


def test_global_flags_before_or_after():
    p = build_parser()
    a = p.parse_args(["--seed", "3", "mtau", "--tau", "1", "--tau0", "2", "--C", "1"])
    b = p.parse_args(["mtau", "--tau", "1", "--tau0", "2", "--C", "1", "--seed", "3"])
    assert a.seed == b.seed == 3


def test_child_seeds_deterministic():
    assert child_seeds(42, 3) == child_seeds(42, 3)
    assert len(set(child_seeds(42, 3))) == 3
    assert child_seeds(42, 3) != child_seeds(43, 3)


def test_spectrum_csv(tmp_path):
    pot = tmp_path / "h.json"
    pot.write_text(json.dumps({"dimension": 1, "terms": [{"exponents": [2], "coeff": 0.5}], "k": 2}))
    out = tmp_path / "e.csv"
    code = main(["spectrum", "--potential", str(pot), "--box=-8:8", "--res", "321", "--count", "3", "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["index", "eigenvalue", "residual", "converged"]
    vals = [float(r["eigenvalue"]) for r in rows]
    assert vals == pytest.approx([0, 2, 4], abs=1e-2)
    assert all(r["converged"] == "true" for r in rows)


def test_other_subcommands(tmp_path, capsys):
    pot = tmp_path / "h.json"
    pot.write_text(json.dumps({"dimension": 1, "terms": [{"exponents": [2], "coeff": 0.5}], "k": 2}))
    sq = tmp_path / "sq.json"
    sq.write_text(json.dumps({"dimension": 1, "terms": [{"exponents": [2], "coeff": 1.0}]}))
    lim = tmp_path / "lim.json"
    assert main(["limit-poly", "--potential", str(sq), "--seq", "y=v/j^a,tau=j^b,h=j^-c",
                 "--v", "1", "--a", "1", "--b", "2", "--c", "1", "--out", str(lim)]) == 0
    data = json.loads(lim.read_text())
    assert data["limit"]["status"] == "converged"
    assert data["certificate"]["status"] == "inequality_violated"
    part = tmp_path / "part.json"
    assert main(["partition", "--potential", str(pot), "--box=-4:4", "--r", "0.5", "--res", "801", "--out", str(part)]) == 0
    assert part.exists() and part.with_suffix(".csv").exists()
    assert main(["probe-compactness", "--potential", str(pot), "--lambda", "5", "--boxes", "4,6,8", "--h", "0.05"]) == 0
    assert main(["ims-check", "--potential", str(pot), "--box=-2:2", "--res", "401", "--centers=-0.15;0.15"]) == 0
    assert main(["maximal-estimate", "--potential", "vdelta:1", "--tau", "1,2", "--box=-4:4,-4:4",
                 "--res", "81", "--centers=-2:2:3x-2:2:3"]) == 0
    capsys.readouterr()
    assert main(["mtau", "--tau", "0.5", "--tau0", "1", "--C", "1", "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["result"]["m"] == pytest.approx(2**0.5)
