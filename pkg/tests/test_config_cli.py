import filecmp
import json
import subprocess
import sys
from pathlib import Path

import pytest

from waveguide_carleman.cli import OUTPUT_ROOT_ENV, main
from waveguide_carleman.config import COMMANDS, SCHEMA, load_config, parse_config
from waveguide_carleman.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SMOKE = CONFIGS / "smoke.ini"


def _smoke_text(**replace) -> str:
    text = SMOKE.read_text()
    for old, new in replace.items():
        assert old in text
        text = text.replace(old, new)
    return text


def _error_line(capsys) -> str:
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1, err
    assert err[0].startswith("error: ")
    return err[0]


# -- parsing ------------------------------------------------------------------

@pytest.mark.parametrize("name", ["reference.ini", "selection.ini", "smoke.ini"])
def test_shipped_configs_parse(name):
    cfg = load_config(CONFIGS / name)
    assert "c" in cfg.fields and "theta0" in cfg.fields


def test_unknown_key_names_key_and_accepted_set():
    text = _smoke_text(**{"gamma = 2e-4": "gamma_rate = 2e-4"})
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    msg = str(exc.value)
    assert "'gamma_rate'" in msg and "[carleman]" in msg
    assert all(k in msg for k in SCHEMA["carleman"])


def test_all_problems_reported_together():
    text = _smoke_text(**{"c_m = 0.9": "c_m = abc", "kappa = 0.5": "kappa = 1.5"})
    text = text.replace("ell = 1.0\n", "")
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    msg = str(exc.value)
    assert "3 problem(s)" in msg
    assert "c_m" in msg and "kappa" in msg and "'ell'" in msg


def test_unknown_section_and_bad_choice():
    text = _smoke_text(**{"method = flux": "method = spectral"}) + "\n[extras]\nx = 1\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert "[extras]" in str(exc.value) and "flux, upwind" in str(exc.value)


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.ini")


def test_output_dir_root_only_prefixes_relative(tmp_path):
    cfg = load_config(SMOKE)
    assert cfg.output_dir(None, str(tmp_path)) == tmp_path / "out" / "smoke"
    assert cfg.output_dir(str(tmp_path / "abs"), "/elsewhere") == tmp_path / "abs"


# -- exit codes and error format ----------------------------------------------

def test_usage_error_exit_2(capsys):
    assert main([]) == 2
    assert _error_line(capsys).startswith("error: usage_error:")


def test_unknown_command_exit_2(capsys, tmp_path):
    assert main(["explode", str(SMOKE), "-o", str(tmp_path)]) == 2
    line = _error_line(capsys)
    assert line.startswith("error: unknown_command:")
    assert all(c in line for c in COMMANDS)


def test_missing_config_exit_2(capsys, tmp_path):
    assert main(["check", str(tmp_path / "absent.ini")]) == 2
    assert _error_line(capsys).startswith("error: config_error:")


def test_bad_key_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text(_smoke_text(**{"gamma = 2e-4": "gamma_rate = 2e-4"}))
    assert main(["check", str(bad), "-o", str(tmp_path / "o")]) == 2
    line = _error_line(capsys)
    assert line.startswith("error: config_error:") and "gamma_rate" in line


def test_run_without_command_exit_2(capsys, tmp_path):
    assert main(["run", str(SMOKE), "-o", str(tmp_path)]) == 2
    assert "[run] command" in _error_line(capsys)


def test_inadmissible_check_exit_1(capsys, tmp_path):
    # a directional slope far below a0 fails the admissibility checks at run time
    bad = tmp_path / "flat.ini"
    bad.write_text(_smoke_text(**{"c.slope = 2.0": "c.slope = 0.1"}))
    assert main(["check", str(bad), "-o", str(tmp_path / "o")]) == 1
    line = _error_line(capsys)
    assert line.startswith("error: check_failed:") and "directional_slope" in line
    report = json.loads((tmp_path / "o" / "check.json").read_text())
    assert report["passed"] is False


def test_cfl_violation_exit_1(capsys, tmp_path):
    # c exceeds c_M; the step sized for c_M is too long for the actual field
    bad = tmp_path / "fast.ini"
    bad.write_text(_smoke_text(**{"c.slope = 2.0": "c.slope = 8.0"}))
    assert main(["forward", str(bad), "-o", str(tmp_path / "o")]) == 1
    assert _error_line(capsys).startswith("error: cfl_violation:")


# -- outputs -------------------------------------------------------------------

def test_success_prints_json_summary(capsys, tmp_path):
    assert main(["select", str(SMOKE), "-o", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary == {"command": "select", "output": str(tmp_path)}
    assert {"ladder.csv", "select.json", "weight_margins.svg"} <= {p.name for p in tmp_path.iterdir()}


def test_output_root_env(monkeypatch, tmp_path):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    assert main(["check", str(SMOKE), "-q"]) == 0
    assert (tmp_path / "out" / "smoke" / "check.json").is_file()


def test_run_uses_config_command(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(_smoke_text(**{"output = out/smoke": "output = out/smoke\ncommand = forward"}))
    assert main(["run", str(cfg), "-o", str(tmp_path / "o"), "-q"]) == 0
    assert (tmp_path / "o" / "trace.csv").is_file()


@pytest.mark.parametrize("command", COMMANDS)
def test_outputs_byte_identical_across_runs(command, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([command, str(SMOKE), "-o", str(a), "-q"]) == 0
    assert main([command, str(SMOKE), "-o", str(b), "-q"]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir()) and names
    match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert not mismatch and not errors


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "waveguide_carleman", "bogus", str(SMOKE), "-o", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert proc.stderr.startswith("error: unknown_command:")
