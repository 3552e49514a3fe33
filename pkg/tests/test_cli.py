import numpy as np

from r2b2.cli import main
from r2b2.experiment import ExperimentConfig, read_results, save_config


def _config(tmp_path, **kw):
    base = dict(points_per_axis=[5, 5], horizon=10, num_function_samples=2, num_inits=1)
    base.update(kw)
    cfg = ExperimentConfig(**base)
    cfg.output["path"] = str(tmp_path / "results.csv")
    path = tmp_path / "config.yaml"
    save_config(cfg, path)
    return path


def test_run_then_aggregate_then_verify(tmp_path, capsys):
    cfg = _config(tmp_path)
    traces = tmp_path / "traces"
    assert main(["run", str(cfg), "--trace-dir", str(traces)]) == 0
    res = read_results(tmp_path / "results.csv")
    assert len(res["iteration"]) == 10
    out = tmp_path / "agg.json"
    assert main(["aggregate", str(traces), "--format", "json", "-o", str(out)]) == 0
    np.testing.assert_allclose(read_results(out)["metric_mean"], res["metric_mean"], atol=1e-12)
    assert main(["verify", str(traces / "draw001_init000.jsonl"), str(cfg)]) == 0
    assert "verified" in capsys.readouterr().out


def test_verify_detects_tampering(tmp_path):
    cfg = _config(tmp_path)
    traces = tmp_path / "traces"
    main(["run", str(cfg), "--trace-dir", str(traces)])
    path = traces / "draw000_init000.jsonl"
    lines = path.read_text().splitlines()
    import json
    rec = json.loads(lines[5])
    rec["actions"][0] = (rec["actions"][0] + 1) % 5
    lines[5] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    assert main(["verify", str(path), str(cfg)]) == 1


def test_master_seed_override_changes_output(tmp_path):
    cfg = _config(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", str(cfg), "-o", str(a)]) == 0
    assert main(["run", str(cfg), "--master-seed", "7", "-o", str(b)]) == 0
    assert a.read_bytes() != b.read_bytes()


def test_validation_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("schema_version: 1\ndelta: 2.0\n")
    assert main(["run", str(path)]) == 1
    assert "delta" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path):
    assert main(["run", str(tmp_path / "nope.yaml")]) == 3
    assert main(["aggregate", str(tmp_path / "empty")]) == 3


def test_numerical_failure_threshold(tmp_path, monkeypatch):
    import r2b2.experiment as exp
    from r2b2.errors import NumericalError

    real = exp.run_replication

    def flaky(config, draw, init, game=None):
        if draw == 0:
            raise NumericalError("forced breakdown")
        return real(config, draw, init, game)

    monkeypatch.setattr(exp, "run_replication", flaky)
    cfg = _config(tmp_path)
    assert main(["run", str(cfg), "-o", str(tmp_path / "r.csv")]) == 2
