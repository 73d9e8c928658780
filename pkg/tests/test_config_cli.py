import json
import subprocess
import sys

import pytest

from skewprod.config import config_hash, parse_config
from skewprod.errors import ConfigError
from skewprod.presets import PRESETS, preset_config
from skewprod.runner import record_bytes_from_file, run_experiment, write_results


def test_every_preset_validates():
    for name in PRESETS:
        cfg = parse_config(preset_config(name), name_hint=name)
        assert cfg.name == name


def test_catalog_contains_required_presets():
    required = {"scalar-iid", "two-state-base-lattice", "coboundary-degenerate",
                "span-2-counterexample", "doeblin-iid", "renewal-gamma-3-2"}
    assert required <= set(PRESETS)


def test_zero_transition_names_the_cell():
    cfg = preset_config("scalar-iid")
    cfg["base"]["transition"] = [[1.0, 0.0], [0.5, 0.5]]
    with pytest.raises(ConfigError, match=r"base\.transition\[0\]\[1\]"):
        parse_config(cfg)


def test_bad_experiment_and_missing_fields():
    cfg = preset_config("scalar-iid")
    cfg["experiment"] = "nonsense"
    with pytest.raises(ConfigError, match="experiment"):
        parse_config(cfg)
    cfg = preset_config("scalar-iid")
    del cfg["seed"]
    with pytest.raises(ConfigError, match="seed"):
        parse_config(cfg)
    cfg = preset_config("scalar-iid")
    cfg["potentials"]["phi"] = [[0.0]]
    with pytest.raises(ConfigError, match=r"potentials\.phi"):
        parse_config(cfg)


def test_config_hash_ignores_output_dir():
    a = preset_config("scalar-iid")
    b = preset_config("scalar-iid")
    b["output_dir"] = "elsewhere"
    assert config_hash(a) == config_hash(b)
    b["seed"] = 1
    assert config_hash(a) != config_hash(b)


def small_renewal_config(tmp_path, seed=77):
    cfg = preset_config("renewal-gamma-3-2")
    cfg["grids"]["a_list"] = [-15, -10] + list(range(24, 37, 2))
    cfg["renewal"] = {"truncation": 60, "limit_window": [26, 36]}
    cfg["samples"] = {"omega_samples": 8, "strata_depth": 1}
    cfg["seed"] = seed
    cfg["output_dir"] = str(tmp_path / "out")
    return cfg


def test_run_experiment_renewal_and_persistence(tmp_path):
    cfg = parse_config(small_renewal_config(tmp_path))
    result = run_experiment(cfg)
    assert result.exit_code == 0
    assert result.record["verdicts"]["passed"]
    path = write_results(cfg.output_dir, result)
    payload = json.loads(open(path).read())
    assert payload["record"]["experiment"] == "renewal"
    assert "wall_clock_seconds" in payload["timing"]
    csv_path = tmp_path / "out" / "curves" / "renewal.csv"
    assert csv_path.exists()
    header = csv_path.read_text().splitlines()[0]
    assert header == "a,U,target"


def test_rerun_reproduces_record_bytes(tmp_path):
    cfg1 = parse_config(small_renewal_config(tmp_path / "a"))
    cfg2 = parse_config(small_renewal_config(tmp_path / "b"))
    r1 = run_experiment(cfg1)
    r2 = run_experiment(cfg2)
    p1 = write_results(str(tmp_path / "a"), r1)
    p2 = write_results(str(tmp_path / "b"), r2)
    assert record_bytes_from_file(p1) == record_bytes_from_file(p2)


def test_workers_do_not_change_record(tmp_path):
    cfg = parse_config(small_renewal_config(tmp_path))
    r1 = run_experiment(cfg, workers=1)
    r2 = run_experiment(cfg, workers=4)
    from skewprod.config import canonical_record_bytes

    assert canonical_record_bytes(r1.record) == canonical_record_bytes(r2.record)


def test_seed_override_recorded_and_omega_sensitive(tmp_path):
    cfg = parse_config(small_renewal_config(tmp_path))
    r2 = run_experiment(cfg, seed_override=12345)
    assert r2.record["seed"] == 12345
    # on an environment-modulated instance, different seeds draw different
    # ensembles and the statistics move
    two = preset_config("two-state-base-lattice")
    two["experiment"] = "variance"
    two["grids"] = {"n_list": [32, 64]}
    two["samples"] = {"omega_samples": 8, "strata_depth": 1}
    parsed = parse_config(two)
    v1 = run_experiment(parsed)
    v2 = run_experiment(parsed, seed_override=999)
    assert v1.record["stats"]["sigma_sq"] != v2.record["stats"]["sigma_sq"]


def test_expect_degenerate_path(tmp_path):
    cfg = preset_config("coboundary-degenerate")
    cfg["grids"]["n_list"] = [200, 400]
    cfg["samples"] = {"omega_samples": 8, "fiber_replicates": 16}
    parsed = parse_config(cfg)
    result = run_experiment(parsed)
    assert result.record["verdicts"]["outcome"] == "degenerate"
    assert result.exit_code == 0


def test_expect_classifier_failure_path():
    cfg = preset_config("span-2-counterexample")
    cfg["samples"] = {"omega_samples": 4}
    cfg["grids"]["n_list"] = [50]
    parsed = parse_config(cfg)
    result = run_experiment(parsed)
    assert result.record["verdicts"]["outcome"] == "classifier-failure"
    assert result.exit_code == 0


def run_cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "skewprod", *args],
                          capture_output=True, text=True, cwd=cwd)


def test_cli_presets_listing(tmp_path):
    proc = run_cli(["presets"], cwd=tmp_path)
    assert proc.returncode == 0
    for name in PRESETS:
        assert name in proc.stdout


def test_cli_run_config_and_exit_codes(tmp_path):
    cfg = small_renewal_config(tmp_path)
    cfg_path = tmp_path / "renewal.json"
    cfg_path.write_text(json.dumps(cfg))
    proc = run_cli(["run", str(cfg_path)], cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    assert "PASS" in proc.stdout
    # invalid config exits 2
    bad = dict(cfg)
    bad["experiment"] = "bogus"
    bad_path = tmp_path / "bad.json"
    bad_path.write_text(json.dumps(bad))
    proc2 = run_cli(["run", str(bad_path)], cwd=tmp_path)
    assert proc2.returncode == 2
    # unknown preset / missing file exits 2
    proc3 = run_cli(["run", "no-such-thing"], cwd=tmp_path)
    assert proc3.returncode == 2


def test_cli_rerun_byte_identical_results(tmp_path):
    cfg = small_renewal_config(tmp_path)
    cfg_path = tmp_path / "renewal.json"
    cfg_path.write_text(json.dumps(cfg))
    out1 = tmp_path / "o1"
    out2 = tmp_path / "o2"
    p1 = run_cli(["run", str(cfg_path), "--out", str(out1)], cwd=tmp_path)
    p2 = run_cli(["run", str(cfg_path), "--out", str(out2)], cwd=tmp_path)
    assert p1.returncode == 0 and p2.returncode == 0
    b1 = record_bytes_from_file(str(out1 / "results.json"))
    b2 = record_bytes_from_file(str(out2 / "results.json"))
    assert b1 == b2
    c1 = (out1 / "curves" / "renewal.csv").read_bytes()
    c2 = (out2 / "curves" / "renewal.csv").read_bytes()
    assert c1 == c2
