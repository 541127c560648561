import csv
import io
import json
import subprocess
import sys

import pytest

from gllab.cli import CSV_COLUMNS, cache_key, main


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


@pytest.fixture
def cache(tmp_path):
    return ["--cache-dir", str(tmp_path / "cache")]


def test_zero_field_anchor(capsys, cache):
    code, out = run(capsys, "m0", "--b", "0", "--side", "8", "--spacing", "0.25", *cache)
    rec = json.loads(out)
    assert code == 0
    assert abs(rec["energy"] + 32.0) < 1e-8
    assert set(rec) >= {"command", "params", "energy", "breakdown", "residual", "spacing",
                        "extrapolated", "bounds_checked", "seed", "wall_time_s"}
    assert all(b["pass"] for b in rec["bounds_checked"])


def test_negative_b_is_a_usage_error(capsys, cache):
    with pytest.raises(SystemExit) as exc:
        main(["m0", "--b", "-0.1", "--side", "8", *cache])
    assert exc.value.code == 2


def test_missing_required_parameter_is_a_usage_error(cache):
    with pytest.raises(SystemExit) as exc:
        main(["m0", "--b", "0.5", *cache])
    assert exc.value.code == 2


def test_numerical_failure_gives_structured_error(capsys, cache):
    code, out = run(capsys, "m3d", "--b", "0.5", "--side", "60", "--spacing", "0.1", *cache)
    assert code == 1
    rec = json.loads(out)
    assert rec["error"]["type"] == "MemoryError"


def test_repeated_invocations_are_byte_identical(tmp_path, cache):
    outs = []
    for k in range(2):
        path = tmp_path / f"out{k}.json"
        assert main(["mp", "--b", "0.9", "--N", "1", "--spacing", "0.25", "--out", str(path),
                     *cache]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_uncached_reruns_differ_only_in_wall_time(capsys):
    recs = []
    for _ in range(2):
        code, out = run(capsys, "m0", "--b", "0.6", "--side", "6", "--spacing", "0.5",
                        "--no-cache")
        rec = json.loads(out)
        rec.pop("wall_time_s")
        recs.append(rec)
    assert recs[0] == recs[1]


def test_cache_keys_separate_parameters():
    base = {"b": 0.5, "side": 6.0, "spacing": 0.25}
    assert cache_key("m0", base, 0) == cache_key("m0", dict(base), 0)
    assert cache_key("m0", base, 0) != cache_key("m0", dict(base, spacing=0.125), 0)
    assert cache_key("m0", base, 0) != cache_key("m0", base, 1)
    assert cache_key("m0", base, 0) != cache_key("mp", base, 0)


def test_cache_entry_is_a_full_run_record(tmp_path):
    cdir = tmp_path / "c"
    main(["m0", "--b", "0.5", "--side", "4", "--spacing", "0.5", "--cache-dir", str(cdir),
          "--out", str(tmp_path / "o.json")])
    files = list(cdir.glob("*.json"))
    assert len(files) == 1
    run_rec = json.loads(files[0].read_text())
    assert set(run_rec) >= {"command", "parameters", "git_or_build_id", "seed", "outputs",
                            "timestamps", "cache_key"}
    assert files[0].stem == run_rec["cache_key"]


def test_csv_output_has_fixed_columns(capsys, cache):
    code, out = run(capsys, "m0", "--b", "0.5", "--side", "4", "--spacing", "0.5",
                    "--format", "csv", *cache)
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == CSV_COLUMNS
    assert len(rows) == 2 and rows[1][0] == "m0"


def test_flags_override_config_values(tmp_path, capsys, cache):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[defaults]\nspacing = 0.5\nseed = 3\n[m0]\nb = 0.4\nside = 4\n")
    code, out = run(capsys, "m0", "--config", str(cfg), "--b", "0.7", *cache)
    rec = json.loads(out)
    assert rec["params"]["b"] == 0.7
    assert rec["params"]["side"] == 4.0
    assert rec["seed"] == 3
    assert rec["spacing"] == 0.5


def test_sweep_runs_the_grid(tmp_path, capsys, cache):
    cfg = tmp_path / "sweep.ini"
    cfg.write_text("[defaults]\nspacing = 0.5\n[sweep]\ncommand = m0\nb = 0.5, 1.2\n"
                   "side = 4, 6\n")
    code, out = run(capsys, "sweep", "--config", str(cfg), *cache)
    recs = json.loads(out)
    assert code == 0 and len(recs) == 4
    assert [r["energy"] == 0.0 for r in recs] == [False, False, True, True]


def test_check_passes_and_negative_control_fails(tmp_path, capsys, cache):
    cfg = tmp_path / "check.ini"
    cfg.write_text("[check]\nbs = 0.6\nNs = 1\nsides = 4, 8\nspacing = 0.5\n")
    code, out = run(capsys, "check", "--config", str(cfg), *cache)
    assert code == 0 and json.loads(out)["details"]["passed"]
    code, out = run(capsys, "check", "--config", str(cfg), "--corrupt", "2", *cache)
    rec = json.loads(out)
    assert code == 1 and not rec["details"]["passed"]
    assert any(not b["pass"] for b in rec["bounds_checked"])


def test_trial_command_reports_cutoff_properties(capsys, cache):
    code, out = run(capsys, "trial3d", "--kappa", "40", "--H", "40", "--N", "4", *cache)
    rec = json.loads(out)
    assert code == 0
    assert rec["energy"] == 0.0


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "gllab", "abrikosov", "--N", "1",
                          "--spacing", "0.25", "--cache-dir", str(tmp_path)],
                         capture_output=True, text=True, check=True)
    rec = json.loads(out.stdout)
    assert -0.5 <= rec["energy"] / (2 * 3.141592653589793) < 0
