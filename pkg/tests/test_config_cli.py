import csv
import json

import pytest

from gpia import cli
from gpia.config import ConfigError, config_hash, validate

TINY_ATTACK = {"n_train": 8, "n_test": 4, "sample_size": 20, "group_fractions": [0.7, 0.3],
               "classifier": {"tag": "lr"}}


def write(tmp_path, cfg, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def tiny(tmp_path, **extra):
    cfg = {"seed": 0, "output_dir": str(tmp_path / "out"), "graph": {"synthetic": {"n": 300}},
           "gnn": {"hidden_dim": 8, "max_epochs": 10},
           "attacks": [{"id": "A2", **TINY_ATTACK}]}
    cfg.update(extra)
    return cfg


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestValidate:
    def test_minimal(self, tmp_path):
        cfg = validate(write(tmp_path, {"graph": {"synthetic": {}}}))
        assert cfg.graph.synthetic.n == 2000 and cfg.attacks == []

    def test_unknown_field(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            validate(write(tmp_path, {"graph": {"synthetic": {}}, "colour": 1}))
        assert any("colour" in p for p in err.value.problems)

    def test_taxonomy(self, tmp_path):
        with pytest.raises(ConfigError):
            validate(write(tmp_path, {"graph": {"synthetic": {}}, "partial_fraction": None,
                                      "attacks": [{"id": "A1", "layers": [2]}]}))
        with pytest.raises(ConfigError):
            validate(write(tmp_path, {"graph": {"synthetic": {}}, "attacks": [{"id": "A3", "layers": [2]}]}))

    def test_zero_noise_scale(self, tmp_path):
        with pytest.raises(ConfigError):
            validate(write(tmp_path, {"graph": {"synthetic": {}}, "sweep": {"noise_scales": [0]}}))

    def test_empty_axis(self, tmp_path):
        with pytest.raises(ConfigError):
            validate(write(tmp_path, {"graph": {"synthetic": {}}, "sweep": {"depths": []}}))

    def test_every_problem_listed(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            validate(write(tmp_path, {"graph": {"synthetic": {}}, "seed": "x", "output_dir": 3}))
        assert len(err.value.problems) == 2

    def test_missing_files(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            validate(write(tmp_path, {"graph": {"files": {"edges": "e.tsv", "features": "f.csv"}}}))
        assert len(err.value.problems) == 2

    def test_hash_ignores_key_order(self, tmp_path):
        a = validate(write(tmp_path, {"seed": 1, "graph": {"synthetic": {"n": 50, "rho": 0.5}}}, "a.json"))
        b = validate(write(tmp_path, {"graph": {"synthetic": {"rho": 0.5, "n": 50}}, "seed": 1}, "b.json"))
        assert config_hash(a) == config_hash(b)


class TestCommands:
    def test_exit_code_on_bad_config(self, tmp_path, capsys):
        assert cli.main(["attack", "--config", str(write(tmp_path, {"graph": {}}))]) == cli.EXIT_VALIDATION
        assert "invalid configuration" in capsys.readouterr().err

    def test_synth_then_train(self, tmp_path):
        c = write(tmp_path, tiny(tmp_path))
        assert cli.main(["synth", "--config", str(c), "--out", str(tmp_path / "g")]) == 0
        assert (tmp_path / "g" / "edges.tsv").exists()
        assert cli.main(["train", "--graph", str(tmp_path / "g"), "--layers", "1", "--out", str(tmp_path / "m.json")]) == 0
        assert json.loads((tmp_path / "m.json").read_text())["format_version"] == 1

    def test_attack_writes_results_and_manifest(self, tmp_path):
        c = write(tmp_path, tiny(tmp_path))
        assert cli.main(["attack", "--config", str(c)]) == 0
        rows = read_rows(tmp_path / "out" / "results.csv")
        assert len(rows) == 1 and rows[0]["attack_id"] == "A2"
        man = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert man["status"] == "ok" and man["config_hash"] == rows[0]["config_hash"]

    def test_sweep_row_count(self, tmp_path):
        c = write(tmp_path, tiny(tmp_path, sweep={"noise_scales": [0.1, 0.5, 1, 5, 10]}))
        assert cli.main(["sweep", "--config", str(c)]) == 0
        rows = read_rows(tmp_path / "out" / "defenses.csv")
        assert [r["param"] for r in rows] == ["0.1", "0.5", "1.0", "5.0", "10.0"]

    def test_sweep_product(self, tmp_path):
        c = write(tmp_path, tiny(tmp_path, sweep={"depths": [1, 2], "group_ratios": [0.6, 0.8], "seeds": [0, 1]}))
        assert cli.main(["sweep", "--config", str(c)]) == 0
        assert len(read_rows(tmp_path / "out" / "results.csv")) == 2 * 2 * 2

    def test_defend_incompatible(self, tmp_path):
        c = write(tmp_path, tiny(tmp_path, defenses=[{"method": "truncation", "r": 0.1}]))
        assert cli.main(["defend", "--config", str(c)]) == cli.EXIT_VALIDATION

    def test_output_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GPIA_OUTPUT_DIR", str(tmp_path / "elsewhere"))
        c = write(tmp_path, tiny(tmp_path))
        assert cli.main(["analyze", "correlation", "--config", str(c)]) == 0
        assert (tmp_path / "elsewhere" / "correlation.csv").exists()

    @pytest.mark.parametrize("kind", ["disparity", "gapbuckets"])
    def test_analyses(self, tmp_path, kind):
        c = write(tmp_path, tiny(tmp_path))
        assert cli.main(["analyze", kind, "--config", str(c)]) == 0
        assert (tmp_path / "out" / f"{kind}.csv").exists()

    def test_runtime_failure_recorded(self, tmp_path):
        # far more nodes per sample than the partial graph holds
        cfg = tiny(tmp_path)
        cfg["attacks"][0]["sample_size"] = 290
        c = write(tmp_path, cfg)
        assert cli.main(["attack", "--config", str(c)]) == cli.EXIT_RUNTIME
        man = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert man["status"] == "failed" and man["errors"]
