import hashlib
import json

import numpy as np
import pytest

from conftest import REFERENCE_MODEL
from wcmeanfield.cli import main
from wcmeanfield.config import ConfigError, config_from_dict, load_config
from wcmeanfield.meanfield import ou_closed_form, read_csv


def base_config(**extra):
    cfg = {"model": json.loads(json.dumps(REFERENCE_MODEL)), "T": 2.0, "dt": 0.01, "seed": 0}
    cfg.update(extra)
    return cfg


def run_cli(*args):
    return main([str(a) for a in args])


class TestConfig:
    def test_missing_sigma_named(self):
        cfg = base_config()
        del cfg["model"]["sigma"]
        with pytest.raises(ConfigError) as info:
            config_from_dict(cfg)
        assert info.value.path == "model.sigma"

    @pytest.mark.parametrize(
        "mutate,path",
        [
            (lambda c: c.update(Tmax=3), "Tmax"),
            (lambda c: c["model"].update(tua=1.0), "model.tua"),
            (lambda c: c.update(dt=-0.1), "dt"),
            (lambda c: c.update(dt=0.3), "dt"),
            (lambda c: c.update(dt=5.0), "dt"),
            (lambda c: c.update(samples=0), "samples"),
            (lambda c: c["model"].update(sigma=[0.2, "x"]), "model.sigma.1"),
            (lambda c: c.update(seed=2**64), "seed"),
            (lambda c: c["model"].update(coupling=[[1.0]]), "model"),
        ],
    )
    def test_error_paths(self, mutate, path):
        cfg = base_config()
        mutate(cfg)
        with pytest.raises(ConfigError) as info:
            config_from_dict(cfg)
        assert info.value.path == path

    def test_round_trip_and_hash(self, write_config):
        cfg = load_config(write_config(base_config(n=3, converge={"n_ladder": [2], "replications": 2})))
        again = config_from_dict(cfg.to_dict())
        assert again.digest() == cfg.digest()
        assert cfg.replace(output_dir="elsewhere").digest() == cfg.digest()
        assert cfg.replace(seed=1).digest() != cfg.digest()
        assert cfg.steps == 200

    def test_unreadable(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(bad)

    def test_table_input(self):
        cfg = base_config()
        cfg["model"]["input"] = [{"table": [[0, 0], [1, 1]]}, -0.2]
        model = config_from_dict(cfg).model
        assert model.inputs[0](0.5) == 0.5


class TestCommands:
    def test_meanfield(self, tmp_path, write_config):
        out = tmp_path / "mf"
        assert run_cli("meanfield", "--config", write_config(base_config()), "--out", out) == 0
        header, data = read_csv(out / "meanfield.csv")
        assert header == ["t", "m_1", "m_2", "q_1", "q_2"]
        assert data.shape == (201, 5)
        summary = json.loads((out / "summary.json").read_text())
        assert summary["final_m"] == data[-1, 1:3].tolist()
        assert len(summary["config_hash"]) == 64

    def test_meanfield_uncoupled_closed_form(self, tmp_path, write_config):
        cfg = base_config(dt=0.001, T=5.0)
        cfg["model"]["coupling"] = [[0.0, 0.0], [0.0, 0.0]]
        out = tmp_path / "ou"
        assert run_cli("meanfield", "--config", write_config(cfg), "--out", out) == 0
        _, data = read_csv(out / "meanfield.csv")
        m, q = ou_closed_form(config_from_dict(cfg).model, data[:, 0])
        assert np.max(np.abs(data[:, 1:3] - m)) < 1e-8
        assert np.max(np.abs(data[:, 3:5] - q)) < 1e-8

    def test_missing_sigma_exit_code(self, tmp_path, write_config, caplog):
        cfg = base_config()
        del cfg["model"]["sigma"]
        assert run_cli("meanfield", "--config", write_config(cfg), "--out", tmp_path / "x") == 2
        assert "model.sigma" in caplog.text

    def test_network_smoke_and_reload(self, tmp_path, write_config):
        out = tmp_path / "net"
        assert run_cli("network", "--config", write_config(base_config(n=0)), "--out", out) == 0
        header, data = read_csv(out / "network.csv")
        assert header == ["t", "0_1_0", "0_2_0"]
        assert data.shape == (201, 3)
        meta = json.loads((out / "meta.json").read_text())
        assert {"seed", "dt", "n", "params_hash", "config_hash"} <= set(meta)
        # written with 17 significant digits, so the reload is lossless
        text = (out / "network.csv").read_text().splitlines()[5].split(",")
        assert [format(v, ".17g") for v in data[4]] == text

    def test_network_golden_digest(self, tmp_path, write_config):
        out = tmp_path / "g"
        cfg = base_config(n=50, T=1.0, dt=0.01, seed=0)
        assert run_cli("network", "--config", write_config(cfg), "--out", out) == 0
        digest = hashlib.sha256((out / "network.csv").read_bytes()).hexdigest()
        assert digest == NETWORK_GOLDEN_SHA256

    def test_blow_up_exit_code(self, tmp_path, write_config, caplog):
        cfg = base_config(n=2, T=10.0)
        cfg["model"]["coupling"] = [[0.0, 50.0], [50.0, 0.0]]
        assert run_cli("network", "--config", write_config(cfg), "--out", tmp_path / "b") == 3
        assert "step" in caplog.text

    def test_seed_override(self, tmp_path, write_config):
        path = write_config(base_config(n=1))
        run_cli("network", "--config", path, "--out", tmp_path / "a")
        run_cli("network", "--config", path, "--out", tmp_path / "b", "--seed", 5)
        a = (tmp_path / "a" / "network.csv").read_bytes()
        b = (tmp_path / "b" / "network.csv").read_bytes()
        assert a != b
        assert json.loads((tmp_path / "b" / "meta.json").read_text())["seed"] == 5
        assert run_cli("network", "--config", path, "--out", tmp_path / "c", "--seed", -1) == 2

    def test_figure1(self, tmp_path, write_config):
        out = tmp_path / "fig"
        cfg = base_config(T=20.0, dt=0.01, samples=4)
        assert run_cli("figure1", "--config", write_config(cfg), "--out", out) == 0
        _, means = read_csv(out / "figure1_means.csv")
        header, paths = read_csv(out / "figure1_paths.csv")
        assert means.shape[0] == paths.shape[0] == 2001
        assert len(header) == 1 + 4 * 2
        tail = means[-200:, 3:5]
        assert np.max(np.abs(tail - tail[-1])) < 1e-4

    def test_converge(self, tmp_path, write_config):
        out = tmp_path / "cv"
        cfg = base_config(T=1.0, dt=0.02, converge={"n_ladder": [2, 4], "replications": 3})
        assert run_cli("converge", "--config", write_config(cfg), "--out", out) == 0
        header, data = read_csv(out / "convergence.csv")
        assert data.shape == (2, 5)
        report = json.loads((out / "report.json").read_text())
        assert "decreasing" in report and report["replications"] == 3

    def test_converge_single_n(self, tmp_path, write_config):
        out = tmp_path / "cv1"
        cfg = base_config(T=1.0, dt=0.02, converge={"n_ladder": [3], "replications": 2})
        assert run_cli("converge", "--config", write_config(cfg), "--out", out) == 0
        _, data = read_csv(out / "convergence.csv")
        assert data.shape == (1, 5)
        assert "decreasing" not in json.loads((out / "report.json").read_text())

    @pytest.mark.parametrize("block", [{"n_ladder": [3], "replications": 1}, {"n_ladder": [3]}, {}])
    def test_converge_rejects(self, tmp_path, write_config, block):
        cfg = base_config(T=1.0, dt=0.02, converge=block)
        assert run_cli("converge", "--config", write_config(cfg), "--out", tmp_path / "r") == 2

    @pytest.mark.parametrize("command", ["meanfield", "network", "figure1"])
    def test_rerun_from_meta(self, tmp_path, write_config, command):
        cfg = base_config(n=2, T=1.0, samples=3)
        first = tmp_path / "first"
        assert run_cli(command, "--config", write_config(cfg), "--out", first) == 0
        meta_name = "summary.json" if command == "meanfield" else "meta.json"
        second = tmp_path / "second"
        assert run_cli(command, "--config", first / meta_name, "--out", second) == 0
        for f in first.glob("*.csv"):
            assert f.read_bytes() == (second / f.name).read_bytes()
        h1 = json.loads((first / meta_name).read_text())["config_hash"]
        h2 = json.loads((second / meta_name).read_text())["config_hash"]
        assert h1 == h2


# sha256 of network.csv for the reference model, n = 50, T = 1, dt = 0.01, seed 0 (first-run pin)
NETWORK_GOLDEN_SHA256 = "c6e53308354a70935750f711d918d9ed06d63720676b5ea6a7bc1907470bd7f4"
