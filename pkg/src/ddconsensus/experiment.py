"""Experiment pipeline: collect -> synthesize -> certify -> simulate -> report.

Everything an experiment produces lands under one output directory and is
listed in the report manifest.  Reports and CSVs are byte-reproducible for a
fixed config and seed; wall-clock timings go to a separate file so they never
perturb the deterministic artifacts.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fixtures, netgraph, noiseless, noisy, plant as plant_mod, sim
from .config import ExperimentConfig, matrix
from .errors import ConfigError, ConsensusToolkitError, InfeasibleError
from .leader import enclosing_circle, leader_gain, leader_protocol_gains
from .plant import DataRecord, NoiseBound, Plant, collect_data, check_rank

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INFEASIBLE = 2        # synthesis infeasible or certification failed
EXIT_TOLERANCE_UNMET = 3   # certified, but consensus tolerance missed
EXIT_CONFIG_ERROR = 4

_DATA_SEED_BASE = 100
_SIM_SEED_TAG = 7


@dataclass
class ExperimentReport:
    mode: str
    exit_code: int
    certified: bool
    consensus_ok: bool
    final_error: float | None = None
    first_below_tol: int | None = None
    seed: int | None = None
    agents: list = field(default_factory=list)
    region: dict | None = None
    gain_sync: dict | None = None
    spectrum: dict | None = None
    leader: dict | None = None
    diagnostics: list = field(default_factory=list)
    manifest: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "exit_code": self.exit_code,
            "certified": self.certified,
            "consensus_ok": self.consensus_ok,
            "final_error": self.final_error,
            "first_below_tol": self.first_below_tol,
            "seed": self.seed,
            "agents": self.agents,
            "region": self.region,
            "gain_sync": self.gain_sync,
            "spectrum": self.spectrum,
            "leader": self.leader,
            "diagnostics": self.diagnostics,
            "manifest": self.manifest,
        }


def _mat(m: np.ndarray) -> list:
    return [[float(v) for v in row] for row in np.atleast_2d(m)]


def _resolve_plant(cfg: ExperimentConfig) -> Plant:
    if cfg.plant is not None:
        return Plant(a=matrix(cfg.plant.a), b=matrix(cfg.plant.b))
    return fixtures.sec6_plant()


def _resolve_graph(cfg: ExperimentConfig) -> netgraph.NetworkGraph:
    if cfg.graph is not None:
        if cfg.graph.adjacency is not None:
            return netgraph.build_graph(matrix(cfg.graph.adjacency))
        return netgraph.graph_from_edges(cfg.graph.n_nodes, cfg.graph.edges,
                                         undirected_followers=cfg.graph.undirected_followers)
    return fixtures.sec6_graph()


def _resolve_weight(cfg: ExperimentConfig, n: int, agent_index: int) -> np.ndarray:
    w = cfg.weights
    if w.q_per_agent is not None:
        return matrix(w.q_per_agent[agent_index % len(w.q_per_agent)])
    if w.q is not None:
        return matrix(w.q)
    return np.eye(n)


def _resolve_noise_bound(cfg: ExperimentConfig, n: int, horizon: int) -> NoiseBound:
    spec = cfg.noise
    if spec is not None and spec.n11 is not None and spec.n22 is not None:
        n12 = matrix(spec.n12) if spec.n12 is not None else np.zeros((n, horizon))
        return NoiseBound(n11=matrix(spec.n11), n12=n12, n22=matrix(spec.n22))
    n11_scale = spec.n11_scale if spec is not None else 0.1
    n22_scale = spec.n22_scale if spec is not None else -1.0
    return NoiseBound(n11=n11_scale * np.eye(n), n12=np.zeros((n, horizon)),
                      n22=n22_scale * np.eye(horizon))


def _data_horizon(cfg: ExperimentConfig, n: int, p: int) -> int:
    if cfg.data.horizon is not None:
        return cfg.data.horizon
    base = 3 * (n + p)
    return 4 * base if cfg.mode == "noisy" else base


def _collect(cfg: ExperimentConfig, plant: Plant, agent: int, horizon: int,
             bound: NoiseBound | None) -> DataRecord:
    rng = np.random.default_rng([cfg.data.seed, _DATA_SEED_BASE + agent])
    return collect_data(plant, horizon, rng, input_scale=cfg.data.input_scale,
                        noise_bound=bound, noise_fill=cfg.data.noise_fill)


def _sim_x0(cfg: ExperimentConfig, n_nodes: int, n: int) -> np.ndarray:
    rng = np.random.default_rng([cfg.data.seed, _SIM_SEED_TAG])
    return rng.uniform(-1.0, 1.0, (n_nodes, n))


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> ExperimentReport:
    """Execute the configured pipeline and write all artifacts.

    Never raises for synthesis/certification failures; those are encoded in
    the exit code.  Config errors raise ConfigError (exit 4 at the CLI).
    """
    t_start = time.perf_counter()
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}

    try:
        truth = _resolve_plant(cfg)
        graph = _resolve_graph(cfg)
    except ConsensusToolkitError as exc:
        raise ConfigError(f"bad plant/graph specification: {exc}") from exc

    try:
        if cfg.mode == "noiseless":
            report, trace = _run_noiseless(cfg, truth, graph, out, timings)
        elif cfg.mode == "noisy":
            report, trace = _run_noisy(cfg, truth, graph, out, timings)
        else:
            report, trace = _run_leader(cfg, truth, graph, out, timings)
    except ConfigError:
        raise
    except ConsensusToolkitError as exc:
        report = ExperimentReport(mode=cfg.mode, exit_code=EXIT_INFEASIBLE,
                                  certified=False, consensus_ok=False, seed=cfg.data.seed,
                                  diagnostics=[str(exc)])
        trace = None

    if trace is not None:
        trace_files = sim.export_trace_csv(trace, out / "trace")
        plot_files = emit_plot_data(trace, out / "plot")
        report.manifest += [str(p.relative_to(out)) for p in trace_files + plot_files]

    report.manifest.sort()
    _write_report(report, out)
    timings["total_s"] = time.perf_counter() - t_start
    with open(out / "timings.json", "w") as fh:
        json.dump(timings, fh, indent=2, sort_keys=True)
    return report


# ---------------------------------------------------------------------------
# per-mode pipelines
# ---------------------------------------------------------------------------

def _require_assumptions(graph, need_undirected: bool):
    if not netgraph.has_leader_spanning_tree(graph):
        raise InfeasibleError("graph has no leader-rooted spanning tree")
    if need_undirected and not netgraph.follower_subgraph_is_undirected(graph):
        raise InfeasibleError("follower subgraph must be undirected for this pipeline")


def _invertibility_cross_check(cfg, truth, diagnostics):
    square = truth.b.shape[0] == truth.b.shape[1]
    truly_invertible = square and np.linalg.matrix_rank(truth.b) == truth.b.shape[0]
    if cfg.invertible_b != truly_invertible:
        msg = (f"invertible_b flag is {cfg.invertible_b} but the generating plant's "
               f"input matrix is {'invertible' if truly_invertible else 'not invertible'}")
        log.warning(msg)
        diagnostics.append(msg)


def _run_noiseless(cfg, truth, graph, out, timings):
    _require_assumptions(graph, need_undirected=True)
    wgm = netgraph.weighted_graph_matrix(graph)
    dff = netgraph.row_stochastic_dff(graph)
    n_f = graph.n_followers
    diagnostics: list[str] = []
    _invertibility_cross_check(cfg, truth, diagnostics)
    if not plant_mod.is_controllable(truth):
        diagnostics.append("generating plant looks uncontrollable; synthesis may fail")

    horizon = _data_horizon(cfg, truth.n, truth.p)
    t0 = time.perf_counter()
    records, agents = [], []
    for i in range(1, n_f + 1):
        rec = _collect(cfg, truth, i, horizon, None)
        if not check_rank(rec):
            raise InfeasibleError(f"agent {i}: data matrix rank deficient")
        records.append(rec)
        agents.append(noiseless.synthesize_agent(rec, _resolve_weight(cfg, truth.n, i - 1)))
    timings["synthesis_s"] = time.perf_counter() - t0

    region = noiseless.consensus_region(agents, invertible_b=cfg.invertible_b)
    region_ok = noiseless.verify_region(wgm, region)
    k_bar = sum(a.k0 for a in agents) / n_f
    modal_ok = sim.certify_network(truth, wgm, k_bar)
    certified = bool(region_ok and modal_ok)

    if dff.degenerate:
        o_gain = np.zeros((truth.p, truth.p))
        gain_sync = {"skipped": True, "reason": "single follower: its gain already "
                                                "equals the network average"}
    else:
        p_eye = np.eye(truth.p)
        mare = noiseless.gain_consensus_matrix(
            dff,
            matrix(cfg.weights.r_tilde) if cfg.weights.r_tilde is not None else p_eye,
            matrix(cfg.weights.q_tilde) if cfg.weights.q_tilde is not None else p_eye,
            cfg.weights.delta)
        o_gain = mare.o_gain
        gain_sync = {"delta": mare.delta, "mu": dff.mu, "iterations": mare.iterations,
                     "o_gain": _mat(mare.o_gain), "lambda": _mat(mare.lambda_mat)}

    trace = sim.run_noiseless_protocol(truth, graph, [a.k0 for a in agents], o_gain,
                                       _sim_x0(cfg, n_f + 1, truth.n), cfg.horizon)

    agents_out = []
    for i, (rec, a) in enumerate(zip(records, agents), start=1):
        data_files = plant_mod.export_data_record(rec, out / "data" / f"agent{i}")
        agents_out.append({
            "agent": i,
            "k0": _mat(a.k0),
            "p_mat": _mat(a.p_mat),
            "constraint_residuals": a.constraint_residuals,
            "stacked_equation_residual": float(
                np.linalg.norm(rec.stacked() @ a.g - np.vstack([a.k0, np.zeros((truth.n, truth.n))]))),
            "closed_loop_norm": float(np.linalg.norm(truth.a + truth.b @ a.k0)),
            "are_residual": noiseless.are_residual(truth.a, truth.b, a.q, a.p_mat),
            "state_matrix_recovery_error": float(np.linalg.norm(a.a_hat - truth.a)),
            "data_files": [str(p.relative_to(out)) for p in data_files],
        })

    report = ExperimentReport(
        mode="noiseless", exit_code=_exit_code(certified, trace, cfg),
        certified=certified, consensus_ok=_consensus_ok(trace, cfg),
        final_error=float(trace.consensus_error[-1]),
        first_below_tol=trace.first_time_below(cfg.tolerances.consensus),
        seed=cfg.data.seed, agents=agents_out, gain_sync=gain_sync,
        region={
            "kind": region.kind,
            "bound": region.bound,
            "coeffs": list(region.coeffs) if region.coeffs else None,
            "spectrum": [repr(complex(e)) for e in wgm.eigenvalues],
            "max_distance_to_one": float(np.max(np.abs(np.atleast_1d(wgm.eigenvalues) - 1.0))),
            "verified": region_ok,
            "modal_certificate": modal_ok,
        },
        diagnostics=diagnostics,
        manifest=[f for a in agents_out for f in a["data_files"]])
    return report, trace


def _run_noisy(cfg, truth, graph, out, timings):
    _require_assumptions(graph, need_undirected=True)
    alpha, nu = noisy.spectrum_gains(graph.l_ff)
    n_f = graph.n_followers
    diagnostics: list[str] = []

    horizon = _data_horizon(cfg, truth.n, truth.p)
    bound = _resolve_noise_bound(cfg, truth.n, horizon)
    t0 = time.perf_counter()
    records, syntheses = [], []
    for i in range(n_f + 1):   # leader samples its own data too
        rec = _collect(cfg, truth, i, horizon, bound)
        if not check_rank(rec):
            raise InfeasibleError(f"agent {i}: data matrix rank deficient")
        records.append(rec)
        try:
            syntheses.append(noisy.informative_gain(rec, bound, nu, alpha=alpha))
        except InfeasibleError as exc:
            raise InfeasibleError(f"agent {i}: {exc}") from exc
    timings["synthesis_s"] = time.perf_counter() - t0

    lam = np.linalg.eigvalsh((graph.l_ff + graph.l_ff.T) / 2)
    certified = sim.certify_network(truth, lam, syntheses[0].k0, scale=alpha)

    trace = sim.run_noisy_protocol(truth, graph, [s.k0 for s in syntheses], alpha,
                                   _sim_x0(cfg, n_f + 1, truth.n), cfg.horizon)

    agents_out = []
    for i, (rec, s) in enumerate(zip(records, syntheses)):
        data_files = plant_mod.export_data_record(rec, out / "data" / f"agent{i}")
        agents_out.append({
            "agent": i,
            "k0": _mat(s.k0),
            "eps": s.eps, "gamma": s.gamma_scalar, "tau": s.tau,
            "phi_min_eig": float(np.linalg.eigvalsh(s.phi)[0]),
            "data_files": [str(p.relative_to(out)) for p in data_files],
        })

    report = ExperimentReport(
        mode="noisy", exit_code=_exit_code(certified, trace, cfg),
        certified=certified, consensus_ok=_consensus_ok(trace, cfg),
        final_error=float(trace.consensus_error[-1]),
        first_below_tol=trace.first_time_below(cfg.tolerances.consensus),
        seed=cfg.data.seed, agents=agents_out,
        spectrum={"alpha": alpha, "nu": nu,
                  "lambda_min": float(lam[0]), "lambda_max": float(lam[-1]),
                  "modal_certificate": certified},
        diagnostics=diagnostics,
        manifest=[f for a in agents_out for f in a["data_files"]])
    return report, trace


def _run_leader(cfg, truth, graph, out, timings):
    _require_assumptions(graph, need_undirected=False)
    wgm = netgraph.weighted_graph_matrix(graph)
    n_f = graph.n_followers

    horizon = _data_horizon(cfg, truth.n, truth.p)
    t0 = time.perf_counter()
    rec = _collect(cfg, truth, 0, horizon, None)
    if not check_rank(rec):
        raise InfeasibleError("leader data matrix rank deficient")
    q_leader = _resolve_weight(cfg, truth.n, 0)
    synth = leader_gain(rec, q_leader)
    circle = enclosing_circle(wgm, synth.theta)   # InfeasibleError propagates -> exit 2
    timings["synthesis_s"] = time.perf_counter() - t0

    certified = sim.certify_network(truth, wgm, synth.k0, scale=circle.c0)
    init = leader_protocol_gains(synth.k0, circle.c0, n_f)
    trace = sim.run_leader_protocol(truth, graph, init,
                                    _sim_x0(cfg, n_f + 1, truth.n), cfg.horizon)

    data_files = plant_mod.export_data_record(rec, out / "data" / "leader")
    report = ExperimentReport(
        mode="leader-only", exit_code=_exit_code(certified, trace, cfg),
        certified=certified, consensus_ok=_consensus_ok(trace, cfg),
        final_error=float(trace.consensus_error[-1]),
        first_below_tol=trace.first_time_below(cfg.tolerances.consensus),
        seed=cfg.data.seed,
        agents=[{"agent": 0, "k0": _mat(synth.k0), "p_mat": _mat(synth.p_mat),
                 "are_residual": noiseless.are_residual(truth.a, truth.b, q_leader, synth.p_mat),
                 "data_files": [str(p.relative_to(out)) for p in data_files]}],
        leader={"theta": synth.theta, "h0": circle.h0, "r0": circle.r0, "c0": circle.c0,
                "ratio": circle.ratio, "threshold": circle.threshold,
                "margin": circle.margin, "modal_certificate": certified},
        manifest=[str(p.relative_to(out)) for p in data_files])
    return report, trace


def _consensus_ok(trace, cfg) -> bool:
    return bool(trace.consensus_error[-1] < cfg.tolerances.consensus)


def _exit_code(certified: bool, trace, cfg) -> int:
    if not certified:
        return EXIT_INFEASIBLE
    return EXIT_OK if _consensus_ok(trace, cfg) else EXIT_TOLERANCE_UNMET


# ---------------------------------------------------------------------------
# artifact emission
# ---------------------------------------------------------------------------

def emit_plot_data(trace: sim.Trace, outdir) -> list[Path]:
    """Per-axis agent-trajectory CSVs plus the consensus-error series.

    Each axis file holds one column per agent over time; a companion
    plain-text matplotlib script references only these CSVs.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    n_samples, n_agents, n = trace.states.shape
    for axis in range(n):
        path = outdir / f"trajectories_axis{axis}.csv"
        with open(path, "w") as fh:
            fh.write("t," + ",".join(f"agent{i}" for i in range(n_agents)) + "\n")
            for t in range(n_samples):
                fh.write(str(t) + "," +
                         ",".join(f"{trace.states[t, i, axis]:.17g}" for i in range(n_agents)) + "\n")
        written.append(path)

    path = outdir / "consensus_error.csv"
    with open(path, "w") as fh:
        fh.write("t,consensus_error\n")
        for t, e in enumerate(trace.consensus_error):
            fh.write(f"{t},{e:.17g}\n")
    written.append(path)

    script = outdir / "plot.py"
    with open(script, "w") as fh:
        fh.write(_PLOT_SCRIPT.format(n_axes=n))
    written.append(script)
    return written


_PLOT_SCRIPT = '''"""Render agent trajectories and the consensus error from the CSVs here."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).parent
for axis in range({n_axes}):
    with open(here / f"trajectories_axis{{axis}}.csv") as fh:
        reader = csv.reader(fh)
        names = next(reader)[1:]
        rows = [[float(v) for v in row] for row in reader]
    ts = [r[0] for r in rows]
    plt.figure()
    for k, name in enumerate(names):
        plt.plot(ts, [r[k + 1] for r in rows], label=name)
    plt.xlabel("t")
    plt.ylabel(f"state component {{axis}}")
    plt.legend()
    plt.savefig(here / f"trajectories_axis{{axis}}.png", dpi=150)

with open(here / "consensus_error.csv") as fh:
    reader = csv.reader(fh)
    next(reader)
    rows = [[float(v) for v in row] for row in reader]
plt.figure()
plt.semilogy([r[0] for r in rows], [max(r[1], 1e-300) for r in rows])
plt.xlabel("t")
plt.ylabel("max follower deviation from leader")
plt.savefig(here / "consensus_error.png", dpi=150)
'''


def _write_report(report: ExperimentReport, out: Path) -> None:
    report.manifest = sorted(set(report.manifest) | {"report.json", "report.txt"})
    with open(out / "report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "report.txt", "w") as fh:
        fh.write(render_report_text(report))


def render_report_text(report: ExperimentReport) -> str:
    lines = [
        f"mode: {report.mode}",
        f"seed: {report.seed}",
        f"exit code: {report.exit_code}",
        f"certified: {report.certified}",
        f"consensus ok: {report.consensus_ok}"
        + (f" (final error {report.final_error:.3e}, first below tol at t={report.first_below_tol})"
           if report.final_error is not None else ""),
    ]
    if report.region:
        r = report.region
        lines.append("consensus region:")
        if r.get("bound") is not None:
            lines.append(f"  bound: {r['bound']:.6f}")
        if r.get("coeffs"):
            lines.append("  coeffs (a, b, c, d): "
                         + ", ".join(f"{c:.6f}" for c in r["coeffs"]))
        lines.append(f"  spectrum max |eig - 1|: {r['max_distance_to_one']:.6f}")
        lines.append(f"  verified: {r['verified']}; modal certificate: {r['modal_certificate']}")
    if report.spectrum:
        s = report.spectrum
        lines.append(f"coupling: alpha={s['alpha']:.6f} nu={s['nu']:.6f} "
                     f"lambda range [{s['lambda_min']:.4f}, {s['lambda_max']:.4f}]")
    if report.leader:
        ld = report.leader
        lines.append(f"leader: theta={ld['theta']:.6f} circle (h0={ld['h0']:.6f}, "
                     f"r0={ld['r0']:.6f}) ratio={ld['ratio']:.6f} "
                     f"threshold={ld['threshold']:.6f} margin={ld['margin']:.6f} c0={ld['c0']:.6f}")
    if report.gain_sync:
        lines.append(f"gain sync: {report.gain_sync}")
    for a in report.agents:
        lines.append(f"agent {a['agent']}: k0={a['k0']}")
        if "p_mat" in a:
            lines.append(f"  p_mat: {a['p_mat']}")
        for key in ("closed_loop_norm", "are_residual", "stacked_equation_residual",
                    "state_matrix_recovery_error", "eps", "gamma", "tau"):
            if key in a:
                lines.append(f"  {key}: {a[key]:.3e}")
        for name, value in a.get("constraint_residuals", {}).items():
            lines.append(f"  constraint {name}: {value:.3e}")
    for d in report.diagnostics:
        lines.append(f"note: {d}")
    lines.append("manifest:")
    for f in report.manifest:
        lines.append(f"  {f}")
    return "\n".join(lines) + "\n"
