import json
import subprocess
import sys

import pytest

from gridstate.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _field(out, name):
    return next(tok.split("=", 1)[1] for tok in out.split() if tok.startswith(name + "="))


def test_estimate_zero_noise(capsys, tmp_path):
    code, out, _ = run(capsys, "estimate", "--case", "ieee14", "--plan", "full", "--sigma-conv", "0",
                       "--out", str(tmp_path))
    assert code == 0
    assert _field(out, "converged") == "true"
    assert float(_field(out, "max_error")) < 1e-8
    assert (tmp_path / "estimate.csv").exists()


def test_estimate_pmu_only_is_linear(capsys, tmp_path):
    code, out, _ = run(capsys, "estimate", "--case", "ieee30", "--plan", "pmu-only", "--pmus", "auto",
                       "--out", str(tmp_path))
    assert code == 0
    assert _field(out, "iterations") == "1"
    assert _field(out, "method") == "linear"


def test_estimate_from_measurement_file(capsys, tmp_path):
    from gridstate.measurements import conventional_plan, simulate_measurements
    from gridstate.network import load_case

    net, x = load_case("ieee14")
    simulate_measurements(net, x, conventional_plan(net), seed=3).to_csv(tmp_path / "z.csv")
    code, out, _ = run(capsys, "estimate", "--case", "ieee14", "--measurements", str(tmp_path / "z.csv"),
                       "--out", str(tmp_path))
    assert code == 0 and float(_field(out, "max_error")) < 0.05


def test_missing_case_file(capsys):
    code, _, err = run(capsys, "estimate", "--case", "no_such_case.cdf")
    assert code == 2
    assert "no_such_case.cdf" in err


def test_unobservable_plan(capsys, tmp_path):
    code, _, err = run(capsys, "estimate", "--case", "ieee14", "--plan", "pmu-only", "--pmus", "4,",
                       "--out", str(tmp_path))
    assert code == 1
    assert "unreached buses" in err


def test_suite_outputs_and_rerun(capsys, tmp_path):
    args = ["suite", "--case", "ieee14", "--case", "ieee30", "--trials", "8", "--seed", "3", "--out"]
    assert run(capsys, *args, str(tmp_path / "a"))[0] == 0
    assert run(capsys, *args, str(tmp_path / "b"), "--jobs", "2")[0] == 0
    for case in ("ieee14", "ieee30"):
        a = (tmp_path / "a" / case / "suite_report.csv").read_bytes()
        b = (tmp_path / "b" / case / "suite_report.csv").read_bytes()
        assert a == b
        lines = a.decode().splitlines()
        assert lines[0] == "case,label,pmu_count,avg_sd_vmag,pct_vmag,avg_sd_vang,pct_vang,failed_trials"
        assert len(lines) == 7
        assert (tmp_path / "a" / case / "per_bus_sd.csv").read_bytes() == (
            tmp_path / "b" / case / "per_bus_sd.csv"
        ).read_bytes()


@pytest.mark.parametrize("bad", [["--trials", "0"], ["--sigma-pmu", "-1"], ["--jobs", "0"], ["--fractions", "0.1,2"]])
def test_suite_rejects_bad_options(capsys, bad):
    code, _, err = run(capsys, "suite", "--case", "ieee14", *bad)
    assert code == 2 and "configuration error" in err


def test_suite_needs_case(capsys):
    assert run(capsys, "suite", "--trials", "2")[0] == 2


def test_placement(capsys):
    code, out, _ = run(capsys, "placement", "--case", "ieee14")
    assert code == 0
    lines = out.splitlines()
    assert lines[1].split(":")[1].split() == ["4"]
    assert lines[-2].startswith("Only PMUs") and "(14)" in lines[-2]


def test_rank(capsys):
    code, out, _ = run(capsys, "rank", "--case", "ieee14", "--plan", "full")
    assert code == 0 and _field(out, "rank") == "27"
    code, out, _ = run(capsys, "rank", "--case", "ieee30", "--plan", "pmu-only", "--pmus", "6,10")
    assert code == 1 and _field(out, "observable") == "false"


def test_config_precedence(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"case": "ieee14", "seed": 5, "sigma_conv": 0.0, "plan": "full"}))
    monkeypatch.setenv("GRIDSTATE_SEED", "9")
    # config beats environment, flag beats config
    _, out_cfg, _ = run(capsys, "estimate", "--config", str(cfg), "--out", str(tmp_path))
    assert float(_field(out_cfg, "max_error")) < 1e-8
    _, out_flag, _ = run(capsys, "estimate", "--config", str(cfg), "--sigma-conv", "0.03", "--out", str(tmp_path))
    assert float(_field(out_flag, "max_error")) > 1e-4


def test_seed_from_environment(capsys, tmp_path, monkeypatch):
    base = ["estimate", "--case", "ieee14", "--out", str(tmp_path)]
    _, with_flag, _ = run(capsys, *base, "--seed", "9")
    monkeypatch.setenv("GRIDSTATE_SEED", "9")
    _, from_env, _ = run(capsys, *base)
    _, overridden, _ = run(capsys, *base, "--seed", "10")
    assert with_flag == from_env
    assert overridden != from_env
    monkeypatch.setenv("GRIDSTATE_SEED", "nine")
    assert run(capsys, *base)[0] == 2


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"case": "ieee14", "tolerance": 1}))
    code, _, err = run(capsys, "estimate", "--config", str(cfg))
    assert code == 2 and "tolerance" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gridstate", "rank", "--case", "ieee14"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "rank=27" in proc.stdout
