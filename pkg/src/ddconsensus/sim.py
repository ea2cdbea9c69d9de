"""Closed-loop simulation of the three distributed protocols plus
Schur/Lyapunov certification utilities.

All protocols share the plant iteration x_i(t+1) = A x_i(t) + B u_i(t) with
the leader input pinned to zero; they differ in how follower inputs couple to
neighbors and in how gains (and couplings) synchronize over the graph.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError
from .leader import LeaderProtocolInit
from .netgraph import NetworkGraph, WeightedGraphMatrix
from .noiseless import MareGain
from .plant import Plant

log = logging.getLogger(__name__)

DEFAULT_HORIZON = 500
DEFAULT_CONSENSUS_TOL = 1e-3


@dataclass(frozen=True)
class Trace:
    """Closed-loop time series.

    states[t, i] is agent i's state at step t (t = 0..H); inputs[t, i] the
    input applied at step t (t = 0..H-1); gains[t, k] follower k's gain.
    consensus_error[t] = max_i ||x_i(t) - x_0(t)||_2 over followers;
    gain_disagreement[t] = max_k ||K_k(t) - target_gain||_F.
    """

    states: np.ndarray                  # (H+1, N+1, n)
    inputs: np.ndarray                  # (H, N+1, p)
    gains: np.ndarray                   # (H+1, N, p, n) follower gains
    consensus_error: np.ndarray         # (H+1,)
    gain_disagreement: np.ndarray       # (H+1,)
    target_gain: np.ndarray             # (p, n)
    couplings: np.ndarray | None = None  # (H+1, N) follower couplings

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_agents(self) -> int:
        return self.states.shape[1]

    def first_time_below(self, tol: float) -> int | None:
        hits = np.flatnonzero(self.consensus_error < tol)
        return int(hits[0]) if hits.size else None


def _check_run_args(plant: Plant, graph: NetworkGraph, x0s, horizon: int) -> np.ndarray:
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    n_nodes = graph.adjacency.shape[0]
    if x0s.shape != (n_nodes, plant.n):
        raise DimensionMismatchError(
            f"initial states must be {(n_nodes, plant.n)}, got {x0s.shape}")
    return x0s


def _error_series(states: np.ndarray) -> np.ndarray:
    diff = states[:, 1:, :] - states[:, :1, :]
    return np.linalg.norm(diff, axis=2).max(axis=1)


def _disagreement(gains: np.ndarray, target: np.ndarray) -> np.ndarray:
    return np.linalg.norm(gains - target, axis=(2, 3)).max(axis=1)


def run_noiseless_protocol(plant: Plant, graph: NetworkGraph, gains, o_gain,
                           x0s, horizon: int = DEFAULT_HORIZON) -> Trace:
    """Degree-normalized coupling with follower-only gain averaging:

        u_i(t)   = K_i(t) sum_j a_ij/(1+d_i) (x_i - x_j)      (j over all nodes)
        K_i(t+1) = K_i(t) + O sum_j a_ij/(1+z) (K_i - K_j)    (j over followers)

    ``gains`` are the followers' initial gains; the disagreement target is
    their network average, which follower-symmetric weights preserve.
    """
    x0s = _check_run_args(plant, graph, x0s, horizon)
    o_mat = o_gain.o_gain if isinstance(o_gain, MareGain) else np.atleast_2d(np.asarray(o_gain, float))
    n_f = graph.n_followers
    k = np.array([np.atleast_2d(np.asarray(g, dtype=float)) for g in gains])
    if k.shape != (n_f, plant.p, plant.n):
        raise DimensionMismatchError(f"gains must be {(n_f, plant.p, plant.n)}, got {k.shape}")
    if o_mat.shape != (plant.p, plant.p):
        raise DimensionMismatchError(f"sync gain must be {(plant.p, plant.p)}, got {o_mat.shape}")

    adj, deg, z = graph.adjacency, graph.degrees, graph.z
    states = np.empty((horizon + 1, n_f + 1, plant.n))
    inputs = np.zeros((horizon, n_f + 1, plant.p))
    gain_hist = np.empty((horizon + 1, n_f, plant.p, plant.n))
    states[0] = x0s
    gain_hist[0] = k
    target = k.mean(axis=0)

    x = x0s.copy()
    for t in range(horizon):
        for i in range(1, n_f + 1):
            coupling = np.zeros(plant.n)
            for j in range(n_f + 1):
                if adj[i, j]:
                    coupling += adj[i, j] / (1.0 + deg[i]) * (x[i] - x[j])
            inputs[t, i] = k[i - 1] @ coupling
        x = np.array([plant.step(x[i], inputs[t, i]) for i in range(n_f + 1)])
        k_next = k.copy()
        for i in range(1, n_f + 1):
            drift = np.zeros((plant.p, plant.n))
            for j in range(1, n_f + 1):
                if adj[i, j]:
                    drift += adj[i, j] / (1.0 + z) * (k[i - 1] - k[j - 1])
            k_next[i - 1] = k[i - 1] + o_mat @ drift
        k = k_next
        states[t + 1] = x
        gain_hist[t + 1] = k

    return Trace(states=states, inputs=inputs, gains=gain_hist,
                 consensus_error=_error_series(states),
                 gain_disagreement=_disagreement(gain_hist, target),
                 target_gain=target)


def run_noisy_protocol(plant: Plant, graph: NetworkGraph, gains, alpha: float,
                       x0s, horizon: int = DEFAULT_HORIZON) -> Trace:
    """Un-normalized coupling scaled by alpha, leader-anchored gain averaging:

        u_i(t)   = alpha K_i(t) sum_j a_ij (x_i - x_j)
        K_i(t+1) = K_i(t) + sum_j a_ij/(1+d_i) (K_j - K_i)   (j over all nodes)

    ``gains`` holds N+1 initial gains including the leader's at index 0; the
    leader's gain never moves and is the disagreement target.
    """
    x0s = _check_run_args(plant, graph, x0s, horizon)
    n_f = graph.n_followers
    k = np.array([np.atleast_2d(np.asarray(g, dtype=float)) for g in gains])
    if k.shape != (n_f + 1, plant.p, plant.n):
        raise DimensionMismatchError(
            f"gains (leader included) must be {(n_f + 1, plant.p, plant.n)}, got {k.shape}")

    adj, deg = graph.adjacency, graph.degrees
    states = np.empty((horizon + 1, n_f + 1, plant.n))
    inputs = np.zeros((horizon, n_f + 1, plant.p))
    gain_hist = np.empty((horizon + 1, n_f, plant.p, plant.n))
    states[0] = x0s
    gain_hist[0] = k[1:]
    target = k[0].copy()

    x = x0s.copy()
    for t in range(horizon):
        for i in range(1, n_f + 1):
            coupling = np.zeros(plant.n)
            for j in range(n_f + 1):
                if adj[i, j]:
                    coupling += adj[i, j] * (x[i] - x[j])
            inputs[t, i] = alpha * (k[i] @ coupling)
        x = np.array([plant.step(x[i], inputs[t, i]) for i in range(n_f + 1)])
        k_next = k.copy()
        for i in range(1, n_f + 1):
            drift = np.zeros((plant.p, plant.n))
            for j in range(n_f + 1):
                if adj[i, j]:
                    drift += adj[i, j] / (1.0 + deg[i]) * (k[j] - k[i])
            k_next[i] = k[i] + drift
        k = k_next
        states[t + 1] = x
        gain_hist[t + 1] = k[1:]

    return Trace(states=states, inputs=inputs, gains=gain_hist,
                 consensus_error=_error_series(states),
                 gain_disagreement=_disagreement(gain_hist, target),
                 target_gain=target)


def run_leader_protocol(plant: Plant, graph: NetworkGraph, init: LeaderProtocolInit,
                        x0s, horizon: int = DEFAULT_HORIZON) -> Trace:
    """Broadcast protocol: couplings and gains both diffuse from the leader:

        u_i(t)   = c_i(t) K_i(t) sum_j a_ij/(1+d_i) (x_i - x_j)
        K_i(t+1) = K_i(t) + sum_j w_ij (K_j - K_i)
        c_i(t+1) = c_i(t) + sum_j w_ij (c_j - c_i)
    """
    x0s = _check_run_args(plant, graph, x0s, horizon)
    n_f = graph.n_followers
    k = init.gains.astype(float).copy()
    c = init.couplings.astype(float).copy()
    if k.shape != (n_f + 1, plant.p, plant.n):
        raise DimensionMismatchError(
            f"gain table must be {(n_f + 1, plant.p, plant.n)}, got {k.shape}")
    if c.shape != (n_f + 1,):
        raise DimensionMismatchError(f"coupling table must be ({n_f + 1},), got {c.shape}")

    adj, deg = graph.adjacency, graph.degrees
    states = np.empty((horizon + 1, n_f + 1, plant.n))
    inputs = np.zeros((horizon, n_f + 1, plant.p))
    gain_hist = np.empty((horizon + 1, n_f, plant.p, plant.n))
    coup_hist = np.empty((horizon + 1, n_f))
    states[0] = x0s
    gain_hist[0] = k[1:]
    coup_hist[0] = c[1:]
    target = k[0].copy()

    x = x0s.copy()
    for t in range(horizon):
        for i in range(1, n_f + 1):
            coupling = np.zeros(plant.n)
            for j in range(n_f + 1):
                if adj[i, j]:
                    coupling += adj[i, j] / (1.0 + deg[i]) * (x[i] - x[j])
            inputs[t, i] = c[i] * (k[i] @ coupling)
        x = np.array([plant.step(x[i], inputs[t, i]) for i in range(n_f + 1)])
        k_next, c_next = k.copy(), c.copy()
        for i in range(1, n_f + 1):
            k_drift = np.zeros((plant.p, plant.n))
            c_drift = 0.0
            for j in range(n_f + 1):
                if adj[i, j]:
                    w = adj[i, j] / (1.0 + deg[i])
                    k_drift += w * (k[j] - k[i])
                    c_drift += w * (c[j] - c[i])
            k_next[i] = k[i] + k_drift
            c_next[i] = c[i] + c_drift
        k, c = k_next, c_next
        states[t + 1] = x
        gain_hist[t + 1] = k[1:]
        coup_hist[t + 1] = c[1:]

    return Trace(states=states, inputs=inputs, gains=gain_hist,
                 consensus_error=_error_series(states),
                 gain_disagreement=_disagreement(gain_hist, target),
                 target_gain=target, couplings=coup_hist)


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------

_LYAP_COND_CAP = 1e12


def is_schur(f: np.ndarray) -> bool:
    """Schur stability via the discrete Lyapunov equation F'PF - P = -I.

    Solves the vectorized linear system directly (desk scale) and reports
    true iff the solution is positive definite.  A singular or near-singular
    system means an eigenvalue product on the unit circle; backward-stable
    solves still return a finite answer there, so singularity is detected by
    conditioning and reported as unstable with a diagnostic.
    """
    f = np.atleast_2d(np.asarray(f, dtype=float))
    if f.shape[0] != f.shape[1]:
        raise DimensionMismatchError(f"matrix must be square, got {f.shape}")
    n = f.shape[0]
    lhs = np.eye(n * n) - np.kron(f.T, f.T)
    sing = np.linalg.svd(lhs, compute_uv=False)
    if sing[-1] <= sing[0] / _LYAP_COND_CAP:
        log.info("singular Lyapunov system (condition %.2e): eigenvalue product "
                 "on the unit circle; reporting unstable", sing[0] / max(sing[-1], 1e-300))
        return False
    p = np.linalg.solve(lhs, np.eye(n).reshape(-1)).reshape(n, n)
    p = (p + p.T) / 2
    return bool(np.linalg.eigvalsh(p)[0] > 0)


def _real_embedding(m: np.ndarray) -> np.ndarray:
    return np.block([[m.real, -m.imag], [m.imag, m.real]])


def certify_network(plant: Plant, spectrum, k0: np.ndarray, scale: float = 1.0) -> bool:
    """True iff A + scale * lambda * B K0 is Schur for every mode lambda.

    Complex modes go through the 2n x 2n real embedding so the Lyapunov
    certificate never touches complex arithmetic.
    """
    if isinstance(spectrum, WeightedGraphMatrix):
        spectrum = spectrum.eigenvalues
    k0 = np.atleast_2d(np.asarray(k0, dtype=float))
    bk = plant.b @ k0
    for lam in np.atleast_1d(spectrum):
        lam = complex(lam) * scale
        modal = plant.a + lam * bk
        if abs(lam.imag) > 0:
            modal = _real_embedding(modal)
        else:
            modal = modal.real
        if not is_schur(modal):
            return False
    return True


# ---------------------------------------------------------------------------
# trace export
# ---------------------------------------------------------------------------

def _write_series(path: Path, header_lines: list[str], rows: np.ndarray) -> None:
    rows = np.atleast_2d(rows)
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        if rows.size == 0:
            return
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def export_trace_csv(trace: Trace, outdir) -> list[Path]:
    """One CSV per quantity; columns are time steps, ordering in the header."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    h1, n_agents, n = trace.states.shape
    p = trace.inputs.shape[2] if trace.inputs.ndim == 3 else 0

    states = trace.states.reshape(h1, n_agents * n).T
    path = outdir / "states.csv"
    _write_series(path, [f"states: row = agent*{n} + component (agents 0..{n_agents - 1}, "
                         f"leader first), column = time step 0..{h1 - 1}"], states)
    written.append(path)

    inputs = trace.inputs.reshape(trace.inputs.shape[0], n_agents * p).T
    path = outdir / "inputs.csv"
    _write_series(path, [f"inputs: row = agent*{p} + channel, column = time step"], inputs)
    written.append(path)

    n_f = trace.gains.shape[1]
    gains = trace.gains.reshape(h1, n_f * p * n).T
    path = outdir / "gains.csv"
    _write_series(path, [f"gains: row = follower*{p * n} + row-major gain entry "
                         f"(followers 1..{n_f}), column = time step"], gains)
    written.append(path)

    if trace.couplings is not None:
        path = outdir / "couplings.csv"
        _write_series(path, ["couplings: row = follower (1..N), column = time step"],
                      trace.couplings.T)
        written.append(path)

    for name, series in (("consensus_error", trace.consensus_error),
                         ("gain_disagreement", trace.gain_disagreement)):
        path = outdir / f"{name}.csv"
        _write_series(path, [f"{name}: single row, column = time step"], series[None, :])
        written.append(path)
    return written
