import json

import pytest

from runtumble._validation import ConfigError
from runtumble.cli import main, run
from runtumble.config import apply_override, config_hash, load_config, shipped_config


def _write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_override_parsing():
    cfg = {}
    apply_override(cfg, "rate.chi=0.8")
    apply_override(cfg, "kernel.shape=BoxcarInAngle")
    apply_override(cfg, "grid.x_box=[-1.0, 1.0]")
    apply_override(cfg, "lyapunov.use_lambda_tilde=false")
    assert cfg == {"rate": {"chi": 0.8}, "kernel": {"shape": "BoxcarInAngle"}, "grid": {"x_box": [-1.0, 1.0]},
                   "lyapunov": {"use_lambda_tilde": False}}
    with pytest.raises(ConfigError):
        apply_override(cfg, "rate.chi")
    with pytest.raises(ConfigError):
        apply_override(cfg, "rate.chi.x=1")


def test_angles_and_experiment(tmp_path):
    p = _write(tmp_path, 'experiment = "geometry"\nseed = 1\n[geometry]\nalpha_over_pi = 0.5\n')
    cfg = load_config(p, experiment="simulate")
    assert cfg["experiment"] == "simulate"
    assert cfg["geometry"]["alpha"] == pytest.approx(1.5707963267948966)


def test_missing_seed(tmp_path):
    with pytest.raises(ConfigError, match="seed"):
        load_config(_write(tmp_path, 'experiment = "geometry"\n'))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_hash_is_order_free():
    assert config_hash({"a": 1, "b": {"c": 2}}) == config_hash({"b": {"c": 2}, "a": 1})


def test_missing_kernel_exits_1(tmp_path, capsys):
    p = _write(tmp_path, 'experiment = "drift-check"\nseed = 1\n[field]\ndim = 2\n[rate]\nchi = 0.5\n')
    assert main(["drift-check", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "missing section: [kernel]" in capsys.readouterr().err


def test_unknown_shape_exits_1(tmp_path):
    p = shipped_config("bounded")
    assert main(["drift-check", "--config", str(p), "--set", "kernel.shape=Nope", "--out", str(tmp_path)]) == 1


def test_geometry_cli_and_manifest(tmp_path):
    out = tmp_path / "geo"
    assert main(["geometry", "--config", str(shipped_config("geometry")), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "pass" and man["seed"] == 0
    assert set(man["artifacts"]) == {"geometry.json", "iterates.csv"}
    assert man["config_sha256"] == config_hash(man["config"])
    assert {"numpy", "numba", "python"} <= set(man["versions"])
    geo = json.loads((out / "geometry.json").read_text())
    assert geo["report"]["n_tilde"] == 4024
    assert geo["checks"]["max_circle_deviation"] < 1e-10


def test_run_is_repeatable(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run("geometry", shipped_config("geometry"), out=a)
    run("geometry", shipped_config("geometry"), out=b)
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
