import csv
import io
import json
import shlex
import subprocess
import sys

import numpy as np
import pytest

from gibbsprobe import cli
from gibbsprobe.model import GibbsModel, read_model, write_model
from gibbsprobe.reproduce import Check
from gibbsprobe.sampler import NoiseSpec, read_samples, shim_command, write_noise
from gibbsprobe.single_qubit import synthetic_scan, write_scan

CHAIN = GibbsModel(3, {(0, 1): 0.3, (1, 2): -0.2, (0,): 0.1})


def run(*argv, env=None):
    out = io.StringIO()
    code = cli.main([str(a) for a in argv], out)
    return code, out.getvalue()


def rows(text):
    return list(csv.reader(io.StringIO(text)))


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "chain.json"
    write_model(CHAIN, path)
    return path


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv("GIBBSPROBE_SEED", raising=False)


def test_sample_then_learn(model_file, tmp_path):
    code, text = run("sample", "--model", model_file, "--out", tmp_path / "s.txt", "-M", 200000, "--seed", 3)
    assert code == 0
    assert rows(text)[1][1:3] == ["3", "200000"]
    assert read_samples(tmp_path / "s.txt").total == 200000
    code, text = run("learn", "--samples", tmp_path / "s.txt", "--out", tmp_path / "m.json")
    assert code == 0
    learned = read_model(tmp_path / "m.json")
    assert learned[(0, 1)] == pytest.approx(0.3, abs=0.02)
    assert learned[(1, 2)] == pytest.approx(-0.2, abs=0.02)
    assert (tmp_path / "m.report.json").exists()
    table = dict((r[0], float(r[1])) for r in rows(text)[1:])
    assert table["0-1"] == learned[(0, 1)]


def test_learn_order_flag(model_file, tmp_path):
    run("sample", "--model", model_file, "--out", tmp_path / "s.txt", "-M", 50000, "--seed", 1)
    code, _ = run("learn", "--samples", tmp_path / "s.txt", "--out", tmp_path / "m3.json", "-k", 3)
    assert code == 0
    assert (0, 1, 2) in read_model(tmp_path / "m3.json").terms


def test_noisy_and_blackbox_sampling(model_file, tmp_path):
    write_noise(NoiseSpec.uniform(3, 1.0, h_sd=0.1), tmp_path / "noise.json")
    code, _ = run("sample", "--model", model_file, "--out", tmp_path / "n.txt", "-M", 1000, "--mode", "noisy",
                  "--noise", tmp_path / "noise.json", "--seed", 2)
    assert code == 0
    command = " ".join(shlex.quote(c) for c in shim_command())
    code, _ = run("sample", "--model", model_file, "--out", tmp_path / "b.txt", "-M", 1000, "--mode", "blackbox",
                  "--command", command, "--batch-size", 400, "--seed", 2)
    assert code == 0
    assert read_samples(tmp_path / "b.txt").total == 1000


def test_error_est(model_file, tmp_path):
    code, text = run("error-est", "--model", model_file, "-M", 100000, "-R", 4, "--seed", 0,
                     "--json", tmp_path / "e.json")
    assert code == 0
    table = rows(text)
    assert table[0] == ["term", "mean", "sigma"]
    assert table[-1][0] == "threshold" and float(table[-1][1]) > 0
    assert json.loads((tmp_path / "e.json").read_text())["threshold"] == float(table[-1][1])


def test_fit_single(tmp_path):
    scan = synthetic_scan(np.linspace(-0.3, 0.3, 21), 100000, 10.0, 0.004, kind="classical", seed=1)
    write_scan(scan, tmp_path / "scan.csv")
    code, text = run("fit-single", "--scan", tmp_path / "scan.csv", "--kind", "classical", "--out", tmp_path / "f.json")
    assert code == 0
    table = rows(text)
    assert table[1][0] == "classical"
    assert float(table[1][1]) == pytest.approx(10.0, rel=0.05)
    assert json.loads((tmp_path / "f.json").read_text())[0]["kind"] == "classical"


def test_respond_default_system_and_pairs(tmp_path):
    code, text = run("respond", "--n-models", 300, "--seed", 1, "--pairs-out", tmp_path / "p.csv",
                     "--out", tmp_path / "rf.json")
    assert code == 0
    code2, text2 = run("respond", "--pairs", tmp_path / "p.csv")
    assert code2 == 0 and text2 == text
    main = run("respond", "--pairs", tmp_path / "p.csv", "--convention", "main-text")[1]
    sym = {tuple(r[:4]): float(r[4]) for r in rows(text)[1:]}
    doubled = {tuple(r[:4]): float(r[4]) for r in rows(main)[1:]}
    key = next(k for k in sym if k[1] == "chi" and k[2] != k[3])
    assert doubled[key] == pytest.approx(2 * sym[key])


def test_respond_custom_system(tmp_path):
    write_noise(NoiseSpec.uniform(3, 5.0, h_sd=0.02), tmp_path / "noise.json")
    code, text = run("respond", "--noise", tmp_path / "noise.json", "--edges", "0-1,1-2", "--n-models", 100)
    assert code == 0
    assert rows(text)[1][0] == "h[0]"
    assert run("respond", "--noise", tmp_path / "noise.json", "--n-models", 100)[0] == 1
    assert run("respond", "--noise", tmp_path / "noise.json", "--edges", "0:1", "--n-models", 100)[0] == 1


def test_oracle_table():
    code, text = run("oracle")
    table = rows(text)
    assert code == 0 and len(table) == 451
    assert max(float(r[-1]) for r in table[1:]) < 1e-9


def test_reproduce_passing_target(capsys):
    code, text = run("reproduce", "--target", "oracle-grid")
    assert code == 0
    assert rows(text)[0] == ["target", "quantity", "expected", "got", "tolerance", "pass"]
    assert "[PASS]" in capsys.readouterr().err


def test_reproduce_failure_exit_code(monkeypatch):
    bad = Check("oracle-grid", "forced", 0.0, 1.0, 0.1, False)
    info = Check("oracle-grid", "note", 0.0, 1.0, 0.1, False, informational=True)
    monkeypatch.setattr(cli, "run_target", lambda *a, **k: [bad])
    assert run("reproduce", "--target", "oracle-grid")[0] == 2
    monkeypatch.setattr(cli, "run_target", lambda *a, **k: [info])
    assert run("reproduce", "--target", "oracle-grid")[0] == 0


def test_unknown_target():
    assert run("reproduce", "--target", "figure-9")[0] == 1


def test_bad_arguments_exit_1(capsys):
    with pytest.raises(SystemExit) as err:
        cli.main(["learn", "--order", "x"])
    assert err.value.code == 1


@pytest.mark.parametrize("argv", [["learn", "--out", "x.json"], ["sample", "--model", "missing.json", "--out", "s.txt"],
                                  ["fit-single", "--scan", "missing.csv"]])
def test_invalid_inputs_exit_1(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert run(*argv)[0] == 1
    assert "error" in capsys.readouterr().err


def test_malformed_model_file(tmp_path):
    (tmp_path / "bad.json").write_text('{"n_spins": 2, "terms": [[[0, 5], 1.0]]}')
    assert run("sample", "--model", tmp_path / "bad.json", "--out", tmp_path / "s.txt")[0] == 1
    (tmp_path / "junk.json").write_text("not json")
    assert run("sample", "--model", tmp_path / "junk.json", "--out", tmp_path / "s.txt")[0] == 1


def test_config_file_and_override(model_file, tmp_path):
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"num_reads": 777, "seed": 5}))
    code, text = run("--config", config, "sample", "--model", model_file, "--out", tmp_path / "a.txt")
    assert code == 0 and rows(text)[1][2] == "777"
    code, text = run("--config", config, "sample", "--model", model_file, "--out", tmp_path / "b.txt", "-M", 99)
    assert rows(text)[1][2] == "99"
    config.write_text(json.dumps({"no_such_option": 1}))
    assert run("--config", config, "sample", "--model", model_file, "--out", tmp_path / "c.txt")[0] == 1


def test_environment_seed(model_file, tmp_path, monkeypatch):
    monkeypatch.setenv("GIBBSPROBE_SEED", "11")
    run("sample", "--model", model_file, "--out", tmp_path / "a.txt", "-M", 500)
    run("sample", "--model", model_file, "--out", tmp_path / "b.txt", "-M", 500, "--seed", 11)
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    monkeypatch.setenv("GIBBSPROBE_SEED", "eleven")
    assert run("sample", "--model", model_file, "--out", tmp_path / "c.txt", "-M", 500)[0] == 1


def test_reruns_are_byte_identical(model_file, tmp_path):
    outputs = []
    for name in ("a", "b"):
        run("sample", "--model", model_file, "--out", tmp_path / f"{name}.txt", "-M", 20000, "--seed", 8)
        outputs.append(run("learn", "--samples", tmp_path / f"{name}.txt", "--out", tmp_path / f"{name}.json")[1])
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    assert outputs[0] == outputs[1]


def test_threads_option_validated(model_file, tmp_path):
    assert run("--threads", 0, "sample", "--model", model_file, "--out", tmp_path / "a.txt")[0] == 1


def test_console_script_entry_point():
    done = subprocess.run([sys.executable, "-m", "gibbsprobe.cli", "--version"], capture_output=True, text=True)
    assert done.returncode == 0 and "gibbsprobe" in done.stdout
