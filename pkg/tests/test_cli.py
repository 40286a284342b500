import json

import numpy as np
import pytest

from mslap import cli, config
from mslap.data import load_csv, load_libsvm, generate_g50c

MINIMAL = {"dataset": {"generator": "g50c", "options": {"n_per_class": 50, "dim": 5}},
           "graph": {"scales": [{"sigma": 2.0}]}, "mmbo": {"n_e": 20, "dt": 0.05, "mu": 10.0},
           "mml": {"sigma_m": 2.0, "c": 1.0}, "split": {"n_labeled": 20}}


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return str(p)


class TestConfig:
    def test_defaults_filled(self):
        cfg = config.resolve({"dataset": {"generator": "g50c"}})
        assert cfg["mmbo"]["eta"] == 1e-7
        assert cfg["mml"]["tol"] == 1e-3
        assert cfg["graph"]["scales"] == [{"t": 0, "c": 1.0, "p": 1, "sigma": 1.0}]

    @pytest.mark.parametrize("raw, where", [
        ({"dataset": {"generator": "g50c"}, "mmbo": {"foo": 1}}, "mmbo.foo"),
        ({"dataset": {"generator": "g50c"}, "mmbo": {"dt": -1}}, "mmbo.dt"),
        ({"dataset": {"generator": "g50c"}, "graph": {"scales": [{"q": 1}]}}, "graph.scales.0.q"),
        ({"dataset": {"generator": "g50c"}, "graph": {"scales": [{}] * 4}}, "graph.scales"),
        ({"dataset": {"generator": "g50c", "path": "x.csv"}}, "dataset"),
        ({}, "dataset"),
        ({"dataset": {"generator": "g50c", "options": {"bogus": 1}}}, "dataset.options.bogus"),
        ({"dataset": {"generator": "g50c"}, "method": "svm"}, "method"),
        ({"dataset": {"generator": "g50c"}, "split": {"stratified": "yes"}}, "split.stratified"),
    ])
    def test_errors_name_field(self, raw, where):
        with pytest.raises(config.ConfigError) as info:
            config.resolve(raw)
        assert info.value.where == where

    def test_max_scales_overridable(self):
        cfg = config.resolve({"dataset": {"generator": "g50c"},
                              "graph": {"scales": [{}] * 4, "max_scales": 4}})
        assert len(cfg["graph"]["scales"]) == 4

    def test_json_error_location(self, tmp_path):
        with pytest.raises(config.ConfigError) as info:
            config.load(write_cfg(tmp_path, '{\n  "method": }'))
        assert ":2:" in info.value.where

    def test_relative_path(self, tmp_path):
        (tmp_path / "d.csv").write_text("1,0\n2,1\n")
        cfg = config.load(write_cfg(tmp_path, {"dataset": {"path": "d.csv"}}))
        assert cfg["dataset"]["path"] == str((tmp_path / "d.csv").resolve())

    def test_override(self):
        cfg = config.resolve({"dataset": {"generator": "g50c"}})
        out = config.override(cfg, method="mml", seed_data=3, seed_split=None, seed_init=None)
        assert out["method"] == "mml" and out["seeds"] == {"data": 3, "split": 0, "init": 0}
        assert cfg["method"] == "mmbo"


class TestDescribe:
    def test_defaults_echoed(self, tmp_path, capsys):
        assert cli.main(["describe", "--config", write_cfg(tmp_path, {"dataset": {"generator": "g50c"}})]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["mmbo"]["eta"] == 1e-7 and doc["mml"]["tol"] == 1e-3
        assert doc["graph"]["scales"] == [{"c": 1.0, "p": 1, "sigma": 1.0, "t": 0}]

    def test_unknown_key(self, tmp_path, capsys):
        path = write_cfg(tmp_path, {"dataset": {"generator": "g50c"}, "colour": "red"})
        assert cli.main(["describe", "--config", path]) == 2
        assert "colour" in capsys.readouterr().err

    def test_flags_override(self, tmp_path, capsys):
        path = write_cfg(tmp_path, {"dataset": {"generator": "g50c"}})
        cli.main(["describe", "--config", path, "--method", "mml", "--seed-init", "4"])
        doc = json.loads(capsys.readouterr().out)
        assert doc["method"] == "mml" and doc["seeds"]["init"] == 4


class TestRun:
    def test_run_writes_outputs(self, tmp_path, capsys):
        path = write_cfg(tmp_path, MINIMAL)
        assert cli.main(["run", "--config", path, "--out", str(tmp_path / "o")]) == 0
        printed = json.loads(capsys.readouterr().out)
        stored = json.loads((tmp_path / "o" / "report.json").read_text())
        assert printed == stored
        assert set(stored) == {"metric", "value", "n", "phase_timings", "extra"}
        assert (tmp_path / "o" / "predictions.csv").read_text().startswith("sample_index,true_label")

    @pytest.mark.parametrize("method", ["mmbo", "mml"])
    def test_byte_identical_modulo_timings(self, tmp_path, method):
        path = write_cfg(tmp_path, MINIMAL)
        for d in ("a", "b"):
            cli.main(["run", "--config", path, "--method", method, "--seed-split", "3",
                      "--out", str(tmp_path / d)])
        a, b = (json.loads((tmp_path / d / "report.json").read_text()) for d in ("a", "b"))
        a.pop("phase_timings"), b.pop("phase_timings")
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
        assert (tmp_path / "a" / "predictions.csv").read_bytes() == (tmp_path / "b" / "predictions.csv").read_bytes()

    def test_repeat(self, tmp_path, capsys):
        path = write_cfg(tmp_path, MINIMAL)
        assert cli.main(["run", "--config", path, "--repeat", "2", "--out", str(tmp_path / "o")]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert len(doc["values"]) == 2
        assert (tmp_path / "o" / "run_1" / "report.json").exists()
        assert (tmp_path / "o" / "summary.json").exists()

    def test_pipeline_error_exit(self, tmp_path, capsys):
        doc = dict(MINIMAL, mmbo={"n_e": 1000})
        assert cli.main(["run", "--config", write_cfg(tmp_path, doc)]) == 1
        assert "[graph_and_eigen" in capsys.readouterr().err

    def test_data_error_exit(self, tmp_path, capsys):
        (tmp_path / "bad.csv").write_text("1,2,0\n3,4\n")
        path = write_cfg(tmp_path, {"dataset": {"path": "bad.csv"}})
        assert cli.main(["run", "--config", path]) == 2
        assert "bad.csv:2" in capsys.readouterr().err

    def test_threads_flag(self, tmp_path, capsys):
        assert cli.main(["run", "--config", write_cfg(tmp_path, MINIMAL), "--threads", "1"]) == 0


def test_sweep_command(tmp_path, capsys):
    doc = dict(MINIMAL, sweep={"grid": {"mmbo.dt": [0.05, 0.1]}})
    assert cli.main(["sweep", "--config", write_cfg(tmp_path, doc), "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and sum(line.startswith("*") for line in lines) == 1
    assert len(json.loads((tmp_path / "sweep.json").read_text())) == 2


def test_sweep_empty_grid_exit(tmp_path, capsys):
    assert cli.main(["sweep", "--config", write_cfg(tmp_path, MINIMAL)]) == 2
    assert "empty" in capsys.readouterr().err


@pytest.mark.parametrize("suffix, loader", [(".csv", load_csv), (".libsvm", load_libsvm)])
def test_gen_data_round_trip(tmp_path, suffix, loader):
    out = tmp_path / f"g{suffix}"
    assert cli.main(["gen-data", "--seed-data", "5", "--out", str(out)]) == 0
    back = loader(out)
    ref = generate_g50c(seed=5)
    np.testing.assert_allclose(back.features, ref.features, atol=1e-12, rtol=0)
    np.testing.assert_array_equal(back.labels, ref.labels)


def test_generated_file_matches_generator_run(tmp_path):
    cli.main(["gen-data", "--seed-data", "0", "--out", str(tmp_path / "g.csv")])
    base = {k: v for k, v in MINIMAL.items() if k != "dataset"}
    gen = write_cfg(tmp_path, dict(base, dataset={"generator": "g50c"}), "gen.json")
    fil = write_cfg(tmp_path, dict(base, dataset={"path": "g.csv"}), "file.json")
    for cfg, d in ((gen, "a"), (fil, "b")):
        cli.main(["run", "--config", cfg, "--out", str(tmp_path / d)])
    a = (tmp_path / "a" / "predictions.csv").read_text()
    b = (tmp_path / "b" / "predictions.csv").read_text()
    assert a == b
