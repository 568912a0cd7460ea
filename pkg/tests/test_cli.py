import json

import numpy as np
import pytest

from pmdkit import cli
from pmdkit import generators as G
from pmdkit import serialization as S
from pmdkit.devices import Pmd


@pytest.fixture
def files(tmp_path):
    def make(name, obj, kind="pmd"):
        path = tmp_path / name
        S.save(obj, path, kind)
        return str(path)

    return make


def _run(capsys, *argv):
    code = cli.run(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_demo_then_compat_simple(tmp_path, capsys):
    path = tmp_path / "half.json"
    assert cli.run(["demo", "noisy-mub", "--eta", "0.5", "-o", str(path)]) == 0
    assert S.load(path, "pmd").allclose(G.noisy_mub(0.5))
    code, out, _ = _run(capsys, "compat", str(path))
    assert code == 0 and "simple" in out and "not simple" not in out


def test_compat_incompatible(files, capsys):
    code, out, _ = _run(capsys, "compat", files("xz.json", G.sharp_xz()), "--format", "json")
    assert code == 1
    assert json.loads(out)["verdict"] == "not simple"


def test_demo_stdout_round_trip(capsys):
    code, out, _ = _run(capsys, "demo", "noisy-mub", "--eta", "0.3", "--dim", "3")
    assert code == 0
    pmd = S.loads(out, "pmd")
    assert pmd.dim == 3 and pmd.allclose(G.noisy_mub(0.3, 3))


def test_validate_non_psd(files, capsys):
    z = np.diag([1.2, 0.0])
    bad = Pmd(np.array([[z, np.eye(2) - z]]))
    code, out, _ = _run(capsys, "validate", files("bad.json", bad))
    assert code == 1 and "PSD" in out
    code, out, _ = _run(capsys, "validate", files("good.json", G.sharp_xz()))
    assert code == 0


def test_verify_thm2(files, capsys):
    code, out, _ = _run(capsys, "verify-thm2", files("e.json", G.noisy_mub(0.8)), "--format", "json")
    rec = json.loads(out)
    assert code == 0 and rec["passed"] and rec["difference"] <= 1e-5
    assert abs(rec["ratio"] - rec["one_plus_robustness"]) <= 1e-5


def test_robustness_and_witness_pipeline(files, tmp_path, capsys):
    pmd = files("e.json", G.noisy_mub(0.9))
    code, out, _ = _run(capsys, "robustness", pmd, "--tol", "1e-8", "--format", "json")
    rec = json.loads(out)
    assert code == 0 and rec["primal_dual_difference"] < 1e-7
    game = tmp_path / "game.json"
    code, out, _ = _run(capsys, "witness", pmd, "-o", str(game))
    assert code == 0
    assert S.load(game, "ensemble").validate().ok
    code, out, _ = _run(capsys, "pguess", pmd, str(game), "--simple", "--format", "json")
    bench = json.loads(out)["value"]
    code, out, _ = _run(capsys, "pguess", pmd, str(game), "--format", "json")
    assert json.loads(out)["value"] > bench


def test_witness_on_simple_pmd(files, tmp_path, capsys):
    code, _, _ = _run(capsys, "witness", files("h.json", G.noisy_mub(0.5)), "-o", str(tmp_path / "g.json"))
    assert code == 1


def test_pguess_seesaw_reproducible(files, capsys):
    pmd = files("p.json", G.random_pmd(2, 2, 2, rng=0))
    game = files("g.json", G.random_ensemble(2, 2, 2, rng=1), "ensemble")
    argv = ["pguess", pmd, game, "--seesaw", "--restarts", "2", "--seed", "5", "--format", "json"]
    first = _run(capsys, *argv)
    second = _run(capsys, *argv)
    assert first[0] == 0 and first[1] == second[1]


def test_seed_from_environment(files, capsys, monkeypatch):
    pmd = files("p.json", G.random_pmd(2, 2, 2, rng=0))
    game = files("g.json", G.random_ensemble(2, 2, 2, rng=1), "ensemble")
    monkeypatch.setenv(cli.SEED_ENV, "5")
    env = _run(capsys, "pguess", pmd, game, "--seesaw", "--restarts", "2", "--format", "json")
    monkeypatch.delenv(cli.SEED_ENV)
    explicit = _run(capsys, "pguess", pmd, game, "--seesaw", "--restarts", "2", "--seed", "5", "--format", "json")
    assert env[1] == explicit[1]


def test_convert(files, tmp_path, capsys):
    xz = files("xz.json", G.sharp_xz())
    swapped = files("zx.json", G.sharp_xz().relabel([1, 0]))
    cert = tmp_path / "cert.json"
    code, out, _ = _run(capsys, "convert", xz, swapped, "-o", str(cert))
    assert code == 0 and "convertible" in out
    protocol = S.free_operation_from_json(json.loads(cert.read_text())["protocol"])
    assert protocol.validate().ok
    triv = files("t.json", Pmd(np.eye(2, dtype=complex)[None, None]))
    code, out, _ = _run(capsys, "convert", triv, xz, "--format", "json")
    assert code == 1 and json.loads(out)["verdict"] == "not_convertible_classical"
    code, out, _ = _run(capsys, "convert", triv, xz, "--refute", "--seed", "0", "--format", "json")
    assert code == 1


def test_twelve_significant_digits(files, capsys):
    code, out, _ = _run(capsys, "robustness", files("xz.json", G.sharp_xz()))
    value = out.splitlines()[0].split()[-1]
    assert len(value.replace(".", "").lstrip("0")) <= 12


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["bogus"],
        ["compat"],
        ["compat", "/nonexistent/file.json"],
        ["demo", "noisy-mub", "--eta", "1.5"],
    ],
)
def test_usage_errors(argv, capsys):
    assert cli.run(argv) == 2


def test_negative_tolerance_is_usage_error(files, capsys):
    code, _, err = _run(capsys, "robustness", files("m.json", G.sharp_xz()), "--tol", "-1")
    assert code == 2 and "tolerances" in err


def test_solver_failure_exit_code(files, capsys, monkeypatch):
    from pmdkit import sdp

    real_solve = sdp.solve

    def failing(problem, opts=None, **kwargs):
        sol = real_solve(problem, opts, **kwargs)
        sol.status = sdp.SdpStatus.NUMERICAL_FAILURE
        return sol

    monkeypatch.setattr(sdp, "solve", failing)
    code, _, err = _run(capsys, "robustness", files("m.json", G.sharp_xz()))
    assert code == 3 and "numerical failure" in err


def test_malformed_input_is_usage_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{", encoding="utf-8")
    assert cli.run(["validate", str(path)]) == 2


def test_mismatched_dimensions_is_usage_error(files, capsys):
    code, _, err = _run(capsys, "convert", files("a.json", G.sharp_xz()), files("b.json", G.noisy_mub(1.0, 3)))
    assert code == 2 and err
