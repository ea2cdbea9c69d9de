import numpy as np
import pytest

from ddconsensus import (
    DimensionMismatchError,
    Plant,
    Trace,
    build_graph,
    certify_network,
    export_trace_csv,
    gain_consensus_matrix,
    is_schur,
    leader_protocol_gains,
    row_stochastic_dff,
    run_leader_protocol,
    run_noiseless_protocol,
    run_noisy_protocol,
    spectrum_gains,
    synthesize_agent,
    weighted_graph_matrix,
)
from ddconsensus.fixtures import sec6_graph, sec6_plant, unstable_plant

from conftest import collect_clean
from oracles import fit_loglinear, spectral_radius_power


class TestProtocolInvariance:
    """Shared leader state + identical gains keep the error identically zero."""

    def test_noiseless(self, sec6_plant, sec6_graph):
        k = -5.0 * sec6_plant.a
        x0 = np.tile(np.array([0.3, -0.4]), (6, 1))
        trace = run_noiseless_protocol(sec6_plant, sec6_graph, [k] * 5,
                                       -0.5 * np.eye(2), x0, horizon=50)
        assert np.all(trace.consensus_error == 0.0)

    def test_noisy(self, sec6_plant, sec6_graph):
        k = -np.eye(2)
        x0 = np.tile(np.array([1.0, 1.0]), (6, 1))
        trace = run_noisy_protocol(sec6_plant, sec6_graph, [k] * 6, 0.13, x0, horizon=50)
        assert np.all(trace.consensus_error == 0.0)
        assert np.all(trace.gain_disagreement == 0.0)

    def test_leader(self, sec6_plant, sec6_graph):
        init = leader_protocol_gains(-5.0 * sec6_plant.a, 1.0, 5)
        init.gains[1:] = init.gains[0]
        init.couplings[1:] = init.couplings[0]
        x0 = np.tile(np.array([-0.2, 0.8]), (6, 1))
        trace = run_leader_protocol(sec6_plant, sec6_graph, init, x0, horizon=50)
        assert np.all(trace.consensus_error == 0.0)
        assert np.all(trace.gain_disagreement == 0.0)


class TestNoiselessProtocol:
    def test_sec6_pipeline_converges(self, sec6_plant, sec6_graph):
        agents = [synthesize_agent(collect_clean(sec6_plant, 15, i), np.eye(2))
                  for i in range(1, 6)]
        mare = gain_consensus_matrix(row_stochastic_dff(sec6_graph), np.eye(2), np.eye(2))
        rng = np.random.default_rng(12)
        trace = run_noiseless_protocol(sec6_plant, sec6_graph, [a.k0 for a in agents],
                                       mare, rng.uniform(-1, 1, (6, 2)), horizon=500)
        assert trace.consensus_error[200] < 1e-3
        assert trace.consensus_error[-1] < 1e-3

    def test_zero_sync_gain_freezes_gains(self, sec6_plant, sec6_graph):
        gains = [np.full((2, 2), 0.1 * i) for i in range(1, 6)]
        x0 = np.zeros((6, 2))
        trace = run_noiseless_protocol(sec6_plant, sec6_graph, gains,
                                       np.zeros((2, 2)), x0, horizon=20)
        assert np.array_equal(trace.gains[0], trace.gains[-1])
        assert trace.gain_disagreement[-1] == trace.gain_disagreement[0] > 0

    def test_states_satisfy_plant_dynamics(self, sec6_plant, sec6_graph):
        agents = [synthesize_agent(collect_clean(sec6_plant, 15, i), np.eye(2))
                  for i in range(1, 6)]
        mare = gain_consensus_matrix(row_stochastic_dff(sec6_graph), np.eye(2), np.eye(2))
        rng = np.random.default_rng(1)
        trace = run_noiseless_protocol(sec6_plant, sec6_graph, [a.k0 for a in agents],
                                       mare, rng.uniform(-1, 1, (6, 2)), horizon=40)
        for t in range(trace.horizon):
            for i in range(6):
                step = sec6_plant.a @ trace.states[t, i] + sec6_plant.b @ trace.inputs[t, i]
                assert np.linalg.norm(trace.states[t + 1, i] - step) <= 1e-12
        assert np.all(trace.inputs[:, 0, :] == 0.0)  # leader runs open loop

    def test_dimension_mismatch(self, sec6_plant, sec6_graph):
        with pytest.raises(DimensionMismatchError):
            run_noiseless_protocol(sec6_plant, sec6_graph, [np.eye(2)] * 4,
                                   np.eye(2), np.zeros((6, 2)), horizon=5)


class TestNoisyProtocol:
    def test_single_follower_scalar_decay_rate(self):
        plant = Plant(a=[[0.5]], b=[[1.0]])
        graph = build_graph([[0.0, 0.0], [1.0, 0.0]])
        alpha, nu = spectrum_gains(graph.l_ff)  # alpha = 1, nu = 0
        k0 = np.array([[-0.8]])
        trace = run_noisy_protocol(plant, graph, [k0, k0], alpha,
                                   np.array([[1.0], [-1.0]]), horizon=60)
        expected_rate = abs(0.5 + alpha * 1.0 * 1.0 * k0[0, 0])  # rho(a + alpha*l*b*k)
        slope, r2 = fit_loglinear(np.arange(10, 41), trace.consensus_error[10:41])
        assert np.exp(slope) == pytest.approx(expected_rate, abs=1e-6)
        assert r2 > 0.999

    def test_gains_converge_to_leader(self, sec6_plant, sec6_graph):
        rng = np.random.default_rng(0)
        gains = [rng.standard_normal((2, 2)) * 0.1 for _ in range(6)]
        trace = run_noisy_protocol(sec6_plant, sec6_graph, gains, 0.13,
                                   np.zeros((6, 2)), horizon=100)
        assert trace.gain_disagreement[0] > 1e-2
        assert trace.gain_disagreement[-1] < 1e-10
        assert np.array_equal(trace.target_gain, gains[0])


class TestLeaderProtocol:
    def test_one_step_update_single_follower(self):
        plant = Plant(a=[[0.5]], b=[[1.0]])
        graph = build_graph([[0.0, 0.0], [1.0, 0.0]])   # a_10 = 1, d_1 = 1
        k0 = np.array([[-0.5]])
        init = leader_protocol_gains(k0, 2.0, 1)
        trace = run_leader_protocol(plant, graph, init, np.zeros((2, 1)), horizon=1)
        assert np.allclose(trace.gains[1, 0], 0.5 * k0)  # w_10 = 1/(1+1)
        assert trace.couplings[1, 0] == pytest.approx(1.0)

    def test_couplings_rise_monotonically_to_target(self, sec6_plant, sec6_graph):
        init = leader_protocol_gains(-5.0 * sec6_plant.a, 1.2, 5)
        trace = run_leader_protocol(sec6_plant, sec6_graph, init,
                                    np.zeros((6, 2)), horizon=200)
        diffs = np.diff(trace.couplings, axis=0)
        assert np.all(diffs >= -1e-12)
        assert np.allclose(trace.couplings[-1], 1.2, atol=1e-9)

    def test_sec6_consensus(self, sec6_plant, sec6_graph):
        from ddconsensus import enclosing_circle, leader_gain

        synth = leader_gain(collect_clean(sec6_plant, 15, 0), np.eye(2))
        circle = enclosing_circle(weighted_graph_matrix(sec6_graph), synth.theta)
        init = leader_protocol_gains(synth.k0, circle.c0, 5)
        rng = np.random.default_rng(6)
        trace = run_leader_protocol(sec6_plant, sec6_graph, init,
                                    rng.uniform(-1, 1, (6, 2)), horizon=500)
        assert trace.consensus_error[-1] < 1e-3


class TestIsSchur:
    def test_zero_matrix(self):
        assert is_schur(np.zeros((3, 3)))

    def test_identity_on_unit_circle(self):
        assert not is_schur(np.eye(2))

    def test_sec6_state_matrix(self, sec6_plant):
        assert is_schur(sec6_plant.a)  # spectral radius ~ 0.99985

    def test_rotation_on_unit_circle(self):
        th = 0.3
        rot = np.array([[np.cos(th), np.sin(th)], [-np.sin(th), np.cos(th)]])
        assert not is_schur(rot)

    def test_agrees_with_power_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            n = int(rng.integers(2, 7))
            f = rng.standard_normal((n, n))
            radius = spectral_radius_power(f)
            if abs(radius - 1.0) <= 1e-6:
                continue
            assert is_schur(f) == (radius < 1.0)


class TestCertifyNetwork:
    def test_deadbeat_gain_closed_form(self, sec6_plant, sec6_graph):
        # with k0 = -B^-1 A each mode is (1 - lambda) A
        k0 = -5.0 * sec6_plant.a
        wgm = weighted_graph_matrix(sec6_graph)
        assert certify_network(sec6_plant, wgm, k0)
        assert not certify_network(sec6_plant, np.array([2.2]), k0)  # |1-2.2|*rho(A) > 1

    def test_zero_gain_stable_plant(self, sec6_plant):
        assert certify_network(sec6_plant, np.array([0.5, 1.5, 2.0 + 1.0j]), np.zeros((2, 2)))

    def test_zero_gain_unstable_plant(self):
        plant = unstable_plant()
        assert not certify_network(plant, np.array([1.0]), np.zeros((2, 2)))

    def test_complex_modes_match_eigen_oracle(self, sec6_plant):
        rng = np.random.default_rng(3)
        k0 = rng.standard_normal((2, 2))
        for lam in (0.9 + 0.4j, 1.3 - 0.2j, 0.4 + 0.0j):
            modal = sec6_plant.a + lam * sec6_plant.b @ k0
            expected = np.max(np.abs(np.linalg.eigvals(modal))) < 1.0
            assert certify_network(sec6_plant, np.array([lam]), k0) == expected


class TestTraceExport:
    def test_files_and_shapes(self, sec6_plant, sec6_graph, tmp_path):
        init = leader_protocol_gains(-5.0 * sec6_plant.a, 1.0, 5)
        trace = run_leader_protocol(sec6_plant, sec6_graph, init,
                                    np.zeros((6, 2)), horizon=10)
        paths = export_trace_csv(trace, tmp_path)
        names = {p.name for p in paths}
        assert names == {"states.csv", "inputs.csv", "gains.csv", "couplings.csv",
                         "consensus_error.csv", "gain_disagreement.csv"}
        states = np.loadtxt(tmp_path / "states.csv", delimiter=",", comments="#")
        assert states.shape == (12, 11)  # 6 agents * 2 components, 11 samples
        inputs = np.loadtxt(tmp_path / "inputs.csv", delimiter=",", comments="#")
        assert inputs.shape == (12, 10)
        with open(tmp_path / "states.csv") as fh:
            assert fh.readline().startswith("# states: row = agent")
