import json

import numpy as np
import pytest

from ddconsensus import ConfigError, Trace
from ddconsensus.config import load_config, parse_config
from ddconsensus.experiment import (
    EXIT_INFEASIBLE,
    EXIT_OK,
    EXIT_TOLERANCE_UNMET,
    emit_plot_data,
    run_experiment,
)


def sec6_cfg(mode, seed, out, **extra):
    raw = {"mode": mode, "fixture": "sec6", "data": {"seed": seed}, "out_dir": str(out)}
    raw.update(extra)
    return parse_config(raw)


class TestConfig:
    def test_requires_seed(self):
        with pytest.raises(ConfigError, match="seed"):
            parse_config({"mode": "noiseless", "fixture": "sec6", "data": {}})

    def test_requires_plant_without_fixture(self):
        with pytest.raises(ConfigError, match="plant"):
            parse_config({"mode": "noiseless", "data": {"seed": 1}})

    def test_bad_mode(self):
        with pytest.raises(ConfigError, match="mode"):
            parse_config({"mode": "magic", "fixture": "sec6", "data": {"seed": 1}})

    def test_yaml_roundtrip(self, tmp_path):
        path = tmp_path / "exp.yaml"
        path.write_text(
            "mode: noiseless\n"
            "fixture: sec6\n"
            "data:\n  seed: 3\n  horizon: 15\n"
            "horizon: 100\n")
        cfg = load_config(path)
        assert cfg.data.seed == 3
        assert cfg.horizon == 100

    def test_data_horizon_alias(self):
        cfg = parse_config({"mode": "noiseless", "fixture": "sec6",
                            "data": {"seed": 3, "T": 18}})
        assert cfg.data.horizon == 18

    def test_yaml_parse_error(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("mode: [unclosed\n")
        with pytest.raises(ConfigError, match="parse error"):
            load_config(path)

    def test_explicit_graph_and_plant(self, tmp_path):
        cfg = parse_config({
            "mode": "leader-only",
            "plant": {"a": [[0.5]], "b": [[1.0]]},
            "graph": {"edges": [[0, 1, 1.0]], "n_nodes": 2},
            "data": {"seed": 5},
            "out_dir": str(tmp_path),
        })
        report = run_experiment(cfg)
        assert report.exit_code == EXIT_OK


class TestPipelines:
    def test_noiseless_artifacts(self, tmp_path):
        cfg = sec6_cfg("noiseless", 7, tmp_path, data={"seed": 7, "horizon": 15})
        report = run_experiment(cfg)
        assert report.exit_code == EXIT_OK
        assert report.certified
        assert 0.09 <= report.region["bound"] <= 1.2
        assert (tmp_path / "report.json").exists()
        assert (tmp_path / "report.txt").exists()
        assert (tmp_path / "timings.json").exists()
        loaded = json.loads((tmp_path / "report.json").read_text())
        for rel in loaded["manifest"]:
            assert (tmp_path / rel).exists(), rel
        assert "report.json" in loaded["manifest"]
        assert not any("timings" in m for m in loaded["manifest"])

    def test_noisy_pipeline(self, tmp_path):
        cfg = sec6_cfg("noisy", 7, tmp_path, data={"seed": 7, "horizon": 45})
        report = run_experiment(cfg)
        assert report.exit_code == EXIT_OK
        assert len(report.agents) == 6  # leader + five followers
        assert report.spectrum["nu"] < 1.0

    def test_leader_pipeline(self, tmp_path):
        cfg = sec6_cfg("leader-only", 7, tmp_path, data={"seed": 7, "horizon": 15})
        report = run_experiment(cfg)
        assert report.exit_code == EXIT_OK
        assert report.leader["ratio"] < report.leader["threshold"]

    def test_disconnected_graph_exits_infeasible(self, tmp_path):
        cfg = parse_config({
            "mode": "noiseless",
            "plant": {"a": [[0.707, 0.707], [-0.707, 0.707]], "b": [[0.2, 0.0], [0.0, 0.2]]},
            "graph": {"adjacency": [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]},
            "data": {"seed": 1},
            "out_dir": str(tmp_path),
        })
        report = run_experiment(cfg)
        assert report.exit_code == EXIT_INFEASIBLE
        assert report.diagnostics

    def test_short_horizon_exits_tolerance_unmet(self, tmp_path):
        cfg = sec6_cfg("noiseless", 7, tmp_path,
                       data={"seed": 7, "horizon": 15}, horizon=3)
        report = run_experiment(cfg)
        assert report.exit_code == EXIT_TOLERANCE_UNMET
        assert report.certified and not report.consensus_ok

    def test_directed_followers_rejected_in_noiseless_mode(self, tmp_path):
        adjacency = np.zeros((3, 3))
        adjacency[1, 0] = 1.0
        adjacency[2, 1] = 1.0  # one-way follower edge
        cfg = parse_config({
            "mode": "noiseless",
            "plant": {"a": [[0.5]], "b": [[1.0]]},
            "graph": {"adjacency": adjacency.tolist()},
            "data": {"seed": 1},
            "out_dir": str(tmp_path),
        })
        report = run_experiment(cfg)
        assert report.exit_code == EXIT_INFEASIBLE

    def test_invertibility_flag_mismatch_warns(self, tmp_path):
        cfg = parse_config({
            "mode": "noiseless",
            "plant": {"a": [[0.9, 0.4], [-0.3, 0.7]], "b": [[0.0], [1.0]]},
            "graph": {"adjacency": [[0.0, 0.0], [1.0, 0.0]]},
            "data": {"seed": 2},
            "invertible_b": True,   # wrong on purpose: B is 2x1
            "out_dir": str(tmp_path),
        })
        report = run_experiment(cfg)
        assert any("invertible" in d for d in report.diagnostics)


class TestDeterminism:
    def test_same_seed_byte_identical_outputs(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            run_experiment(sec6_cfg("noiseless", 5, out, data={"seed": 5, "horizon": 15},
                                    horizon=120))
        files_a = sorted(p.relative_to(out_a) for p in out_a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(out_b) for p in out_b.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            if rel.name == "timings.json":
                continue  # timings live outside the deterministic artifact set
            assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes(), rel

    def test_different_seed_changes_data(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run_experiment(sec6_cfg("noiseless", 5, out_a, data={"seed": 5, "horizon": 15}))
        run_experiment(sec6_cfg("noiseless", 6, out_b, data={"seed": 6, "horizon": 15}))
        assert ((out_a / "data/agent1/x.csv").read_bytes()
                != (out_b / "data/agent1/x.csv").read_bytes())


class TestPlotData:
    def test_shapes_for_six_agent_trace(self, tmp_path):
        rng = np.random.default_rng(0)
        h1, agents, n = 101, 6, 2
        states = rng.standard_normal((h1, agents, n))
        trace = Trace(states=states, inputs=np.zeros((100, agents, 1)),
                      gains=np.zeros((h1, agents - 1, 1, n)),
                      consensus_error=np.linalg.norm(states[:, 1:] - states[:, :1], axis=2).max(axis=1),
                      gain_disagreement=np.zeros(h1), target_gain=np.zeros((1, n)))
        paths = emit_plot_data(trace, tmp_path)
        names = {p.name for p in paths}
        assert names == {"trajectories_axis0.csv", "trajectories_axis1.csv",
                         "consensus_error.csv", "plot.py"}
        for axis in range(2):
            rows = (tmp_path / f"trajectories_axis{axis}.csv").read_text().strip().splitlines()
            assert rows[0] == "t," + ",".join(f"agent{i}" for i in range(6))
            assert len(rows) == 1 + 101
            assert all(len(r.split(",")) == 7 for r in rows[1:])

    def test_empty_trace_headers_only(self, tmp_path):
        trace = Trace(states=np.empty((0, 3, 2)), inputs=np.empty((0, 3, 1)),
                      gains=np.empty((0, 2, 1, 2)), consensus_error=np.empty(0),
                      gain_disagreement=np.empty(0), target_gain=np.zeros((1, 2)))
        emit_plot_data(trace, tmp_path)
        for axis in range(2):
            content = (tmp_path / f"trajectories_axis{axis}.csv").read_text().strip().splitlines()
            assert len(content) == 1  # header row only
        assert (tmp_path / "consensus_error.csv").read_text().strip() == "t,consensus_error"

    def test_error_series_monotone_after_gain_convergence(self, tmp_path):
        from conftest import collect_clean
        from ddconsensus import (
            gain_consensus_matrix,
            row_stochastic_dff,
            run_noiseless_protocol,
            synthesize_agent,
        )
        from ddconsensus.fixtures import sec6_graph, sec6_plant

        plant, graph = sec6_plant(), sec6_graph()
        agents = [synthesize_agent(collect_clean(plant, 15, i), np.eye(2)) for i in range(1, 6)]
        mare = gain_consensus_matrix(row_stochastic_dff(graph), np.eye(2), np.eye(2))
        rng = np.random.default_rng(3)
        trace = run_noiseless_protocol(plant, graph, [a.k0 for a in agents], mare,
                                       rng.uniform(-1, 1, (6, 2)), horizon=150)
        emit_plot_data(trace, tmp_path)
        rows = (tmp_path / "consensus_error.csv").read_text().strip().splitlines()[1:]
        errors = np.array([float(r.split(",")[1]) for r in rows])
        settled = np.flatnonzero(trace.gain_disagreement < 1e-9)[0]
        tail = errors[settled:]
        tail = tail[tail > 0]
        assert np.all(np.diff(tail) <= 1e-12)
