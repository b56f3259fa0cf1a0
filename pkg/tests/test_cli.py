import json
import os

import pytest

from torusop.cli import default_config, main, report, run


def _tree_bytes(root):
    out = {}
    for base, _dirs, files in os.walk(root):
        for name in files:
            path = os.path.join(base, name)
            out[os.path.relpath(path, root)] = open(path, "rb").read()
    return out


def test_run_symbol_check_passes(tmp_path):
    out = tmp_path / "run"
    assert run("symbol-check", out=str(out)) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"]
    assert summary["scenario"] == "symbol-check"
    manifest = json.loads((out / "manifest.json").read_text())
    assert "constants.csv" in manifest["artifacts"]
    assert (out / "constants.csv").exists()


def test_unknown_scenario_rejected(tmp_path):
    with pytest.raises(KeyError):
        run("no-such-scenario", out=str(tmp_path))


def test_unknown_config_keys_listed(tmp_path):
    with pytest.raises(ValueError) as err:
        run("symbol-check", {"Nx": 32, "zeta": 1}, out=str(tmp_path))
    # every offending key must be named, not just the first
    assert "Nx" in str(err.value)
    assert "zeta" in str(err.value)


def test_default_config_copies():
    a = default_config("waveprop")
    a["N"] = 1
    assert default_config("waveprop")["N"] != 1
    with pytest.raises(KeyError):
        default_config("bogus")


def test_rerun_is_deterministic_except_timestamp(tmp_path):
    cfg = {"N": 32, "families": ["laplace+1"], "s": 2.0}
    out1, out2 = tmp_path / "a", tmp_path / "b"
    run("elliptic-estimate", dict(cfg), out=str(out1), seed=0)
    run("elliptic-estimate", dict(cfg), out=str(out2), seed=0)
    t1, t2 = _tree_bytes(out1), _tree_bytes(out2)
    assert set(t1) == set(t2)
    for name in t1:
        if name == "manifest.json":
            m1 = json.loads(t1[name])
            m2 = json.loads(t2[name])
            m1.pop("timestamp")
            m2.pop("timestamp")
            assert m1 == m2
        else:
            assert t1[name] == t2[name], name


def test_report_aggregates_summaries(tmp_path):
    run("symbol-check", {"N": 32}, out=str(tmp_path / "one"))
    run("elliptic-estimate", {"N": 32}, out=str(tmp_path / "two"))
    code, lines = report(str(tmp_path))
    assert code == 0
    counted, total = lines[0].split(" ")[0].split("/")
    assert counted == total
    assert len(lines) == 1


def test_report_empty_directory_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        report(str(tmp_path))


def test_main_run_and_summary(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["--scenario", "symbol-check", "--out", str(out),
                 "--summary"])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "pass" in stdout


def test_main_summary_only_mode(tmp_path, capsys):
    assert main(["--summary", "--out", str(tmp_path)]) == 2
    run("symbol-check", {"N": 32}, out=str(tmp_path))
    assert main(["--summary", "--out", str(tmp_path)]) == 0


def test_main_config_file_and_bad_key(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"nonsense": True}))
    code = main(["--scenario", "symbol-check", "--config", str(cfg_path),
                 "--out", str(tmp_path / "run")])
    assert code == 2
