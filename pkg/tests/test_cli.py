"""End-to-end tests of the command-line surface: subcommands, exit
codes, report determinism, and the subprocess oracle protocol."""

import io
import json

import pytest

from projqe import cli, formula_ir as ir
from projqe.errors import OracleError


def _atom(name, c):
    return ir.CoordAtom(ir.VarRef(name, None, c))


def _write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def exists_doc(tmp_path):
    y = ir.Block("Y", 2)
    f = ir.ShapedFormula((), (), (), ((ir.EXISTS, y),), _atom("Y", 0),
                         ir.CLOSED)
    return _write(tmp_path, "exists.json", ir.formula_to_doc(f))


@pytest.fixture
def false_doc(tmp_path):
    y = ir.Block("Y", 2)
    f = ir.ShapedFormula((), (), (), ((ir.EXISTS, y),),
                         ir.f_and([_atom("Y", 0), _atom("Y", 1)]), ir.CLOSED)
    return _write(tmp_path, "false.json", ir.formula_to_doc(f))


def _run(capsys, argv):
    code = cli.main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


def test_validate_and_reduce(capsys, exists_doc):
    code, rep = _run(capsys, ["validate", exists_doc])
    assert code == cli.EXIT_OK
    assert rep["valid"] and rep["omega"] == 1 and rep["coordinate_fragment"]
    code, red = _run(capsys, ["reduce", exists_doc])
    assert code == cli.EXIT_OK
    assert red["trace"] == [{"case": "Exists", "m": 0, "alpha": 1, "p": 1}]


def test_decide_exit_codes(capsys, exists_doc, false_doc):
    code, rep = _run(capsys, ["decide", exists_doc, "--exit-verdict"])
    assert (code, rep["verdict"]) == (cli.EXIT_OK, True)
    code, rep = _run(capsys, ["decide", false_doc, "--exit-verdict"])
    assert (code, rep["verdict"]) == (cli.EXIT_FALSE, False)
    code, rep = _run(capsys, ["decide", false_doc])
    assert (code, rep["verdict"]) == (cli.EXIT_OK, False)


def test_input_error_exit_codes(capsys, tmp_path):
    assert cli.main(["decide", str(tmp_path / "nope.json")]) == cli.EXIT_INPUT
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["decide", str(bad)]) == cli.EXIT_INPUT
    capsys.readouterr()


def test_patterns_and_poincare(capsys, tmp_path):
    x = ir.Block("X", 3)
    core = ir.f_or([ir.f_and([_atom("X", i)]) for i in range(3)])
    f = ir.plain_formula(core, [x], ir.CLOSED)
    path = _write(tmp_path, "tri.json", ir.formula_to_doc(f))
    code, rep = _run(capsys, ["patterns", path])
    assert code == cli.EXIT_OK
    pat_path = _write(tmp_path, "tri_patterns.json", rep["patterns"])
    # triangle of lines: a bare pattern document is accepted directly
    code, rep = _run(capsys, ["poincare", pat_path])
    assert code == cli.EXIT_OK
    assert rep["betti"] == [1, 1, 3]


def test_verify_directory_and_failure_exit(capsys, tmp_path, exists_doc):
    good = tmp_path / "corp"
    good.mkdir()
    y = ir.Block("Y", 2)
    for i, quant in enumerate((ir.EXISTS, ir.FORALL)):
        f = ir.ShapedFormula((), (), (), ((quant, y),), _atom("Y", 0),
                             ir.CLOSED)
        (good / f"c{i}.json").write_text(json.dumps(ir.formula_to_doc(f)))
    code, rep = _run(capsys, ["verify", str(good)])
    assert code == cli.EXIT_OK
    assert rep["cases"] == 2 and rep["failures"] == 0


def test_verify_report_is_deterministic(capsys, tmp_path):
    argv = ["verify", "--seed", "7", "--count", "3"]
    # restrict to a tiny directory corpus so the test stays fast
    corp = tmp_path / "corp"
    corp.mkdir()
    y, z = ir.Block("Y", 2), ir.Block("Z", 2)
    f = ir.ShapedFormula((), (), (), ((ir.FORALL, y), (ir.EXISTS, z)),
                         ir.f_or([_atom("Y", 0), _atom("Z", 1)]), ir.CLOSED)
    (corp / "a.json").write_text(json.dumps(ir.formula_to_doc(f)))
    argv = ["verify", str(corp), "--seed", "7"]
    cli.main(argv)
    first = capsys.readouterr().out
    cli.main(argv)
    second = capsys.readouterr().out
    assert first == second  # byte-identical reports for identical inputs


def test_crosscheck(capsys, tmp_path):
    x, y = ir.Block("X", 2), ir.Block("Y", 2)
    f = ir.ShapedFormula((x,), (), (), ((ir.EXISTS, y),),
                         ir.f_and([_atom("X", 0), _atom("Y", 0)]), ir.CLOSED)
    path = _write(tmp_path, "free.json", ir.formula_to_doc(f))
    code, rep = _run(capsys, ["crosscheck", path])
    assert code == cli.EXIT_OK
    assert rep["ok"] is True


def test_serve_loop_answers_and_reports_errors():
    request = {"patterns": {"space": [{"label": "A", "arity": 2}],
                            "patterns": [["0x1"], ["0x2"], ["0x3"]]},
               "want": ["betti"]}
    stdin = io.StringIO(json.dumps(request) + "\nnot json\n")
    stdout = io.StringIO()
    cli.serve(stdin, stdout)
    lines = stdout.getvalue().strip().splitlines()
    assert json.loads(lines[0])["betti"] == [1, 0, 1]
    assert "error" in json.loads(lines[1])


def test_subprocess_oracle_roundtrip(capsys, exists_doc):
    cmd = "python3 -m projqe serve"
    code, rep = _run(capsys, ["decide", exists_doc, "--oracle", cmd])
    assert (code, rep["verdict"]) == (cli.EXIT_OK, True)


def test_subprocess_oracle_env(capsys, exists_doc, monkeypatch):
    monkeypatch.setenv("PTODA_ORACLE", "python3 -m projqe serve")
    code, rep = _run(capsys, ["decide", exists_doc])
    assert (code, rep["verdict"]) == (cli.EXIT_OK, True)


def test_subprocess_oracle_error_paths(capsys, exists_doc):
    oracle = cli.SubprocessOracle("python3 -c 'pass'")
    with pytest.raises(OracleError):
        oracle({"want": ["pseudo"]})
    oracle.close()
    code = cli.main(["decide", exists_doc, "--oracle", "python3 -c 'pass'"])
    assert code == cli.EXIT_ORACLE
    capsys.readouterr()
