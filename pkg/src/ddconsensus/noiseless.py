"""Noise-free localized synthesis.

Each follower turns its own input/state record into: a trace-minimal initial
feedback gain with a least-squares-free data parameterization, the matching
Riccati-type value matrix, and a minimum-norm data factor used to assemble the
network-wide consensus region.  A separate modified Riccati fixed point
produces the averaging gain that synchronizes follower gains over the graph.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import sdpcore
from .errors import (
    DimensionMismatchError,
    InfeasibleError,
    NoConvergenceError,
    NumericalFailureError,
    RankDeficientError,
    RegionNotDefiniteError,
    SubdominantModulusError,
)
from .netgraph import RowStochasticDff, WeightedGraphMatrix
from .plant import DataRecord, check_rank

log = logging.getLogger(__name__)

G_RESIDUAL_TOL = 1e-8
MARE_TOL = 1e-10
MARE_CAP = 100_000


@dataclass(frozen=True)
class NoiselessSynthesis:
    """Per-agent synthesis output.

    bk_hat = X_+ G reconstructs the input-path closed-loop contribution B@k0
    from data alone; a_hat = X_+ (u_factor - g) reconstructs the open-loop
    state matrix.  Both enter the consensus region.  constraint_residuals
    holds the certified slack of each program constraint at the returned
    point (minimum eigenvalue for cone constraints, max deviation for the
    symmetry equality).
    """

    gamma: np.ndarray      # T x n decision matrix of the gain program
    k0: np.ndarray         # p x n initial feedback gain
    q: np.ndarray          # n x n synthesis weight
    p_mat: np.ndarray      # n x n data-based Riccati solution
    g: np.ndarray          # T x n minimum-norm data factor
    u_factor: np.ndarray   # T x n closed-loop data factor Gamma (X_- Gamma)^-1
    bk_hat: np.ndarray
    a_hat: np.ndarray
    constraint_residuals: dict = field(default_factory=dict)


def initial_gain(rec: DataRecord, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve the trace-minimal gain program and recover the feedback gain.

        min  trace(Q X_- Gamma)
        s.t. [[X_- Gamma - I, X_+ Gamma], [*, X_- Gamma]] >= 0,
             X_- Gamma >= I,  X_- Gamma symmetric,

    returning (Gamma, K0) with K0 = U_- Gamma (X_- Gamma)^-1.  The constraint
    X_- Gamma >= I keeps the recovered closed loop contractive on the data.
    """
    if not check_rank(rec):
        raise InfeasibleError("input/state data matrix is rank deficient")
    q = np.atleast_2d(np.asarray(q, dtype=float))
    n, horizon = rec.n, rec.horizon
    if q.shape != (n, n):
        raise DimensionMismatchError(f"weight must be {n}x{n}, got {q.shape}")
    if np.linalg.eigvalsh((q + q.T) / 2)[0] <= 0:
        raise ValueError("weight matrix must be positive definite")

    prob = sdpcore.SdpProblem("initial_gain")
    gamma = prob.matrix("gamma", horizon, n)
    xm_g = rec.x_minus @ gamma
    xp_g = rec.x_plus @ gamma
    eye = np.eye(n)
    prob.require_zero(xm_g - xm_g.T, label="symmetry")
    prob.require_psd(sdpcore.block([[xm_g - eye, xp_g], [xp_g.T, xm_g]]), label="contraction")
    prob.require_psd(xm_g - eye, label="scale")
    prob.minimize(sdpcore.trace(q @ xm_g))

    sol = sdpcore.solve(prob)
    if sol.status == "infeasible":
        raise InfeasibleError("gain program infeasible; data violates assumptions")
    if not sol.ok:
        raise NumericalFailureError(f"gain program failed: {sol.detail}")
    gamma_val = sol.values["gamma"]
    k0 = rec.u_minus @ gamma_val @ np.linalg.inv(rec.x_minus @ gamma_val)
    return gamma_val, k0


def riccati_from_data(rec: DataRecord, gamma: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Maximize trace(P) under the data-based closed-loop Riccati inequality.

    With M = X_+ Gamma (X_- Gamma)^-1 the constraint M' P M - P + Q >= 0 and
    P >= 0 admit the closed-loop value matrix as the trace-maximal point.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    n = rec.n
    m = rec.x_plus @ gamma @ np.linalg.inv(rec.x_minus @ gamma)

    prob = sdpcore.SdpProblem("value_matrix")
    p = prob.symmetric("p", n)
    prob.require_psd(m.T @ p @ m - p + q, label="riccati")
    prob.require_psd(p, label="psd")
    prob.maximize(sdpcore.trace(p))

    sol = sdpcore.solve(prob)
    if not sol.ok:
        raise NumericalFailureError(f"value-matrix program failed: {sol.detail}")
    return sol.values["p"]


def solve_g(rec: DataRecord, k0: np.ndarray) -> np.ndarray:
    """Minimum-Frobenius-norm G with [k0; 0] = [U_-; X_-] G.

    Any solution works in exact arithmetic; the pseudoinverse pick is the
    numerically safest and is what the minimum-norm tests pin down.
    """
    k0 = np.atleast_2d(np.asarray(k0, dtype=float))
    w = rec.stacked()
    target = np.vstack([k0, np.zeros((rec.n, k0.shape[1]))])
    g = np.linalg.pinv(w) @ target
    residual = np.linalg.norm(w @ g - target)
    if residual > G_RESIDUAL_TOL * max(1.0, np.linalg.norm(target)):
        raise RankDeficientError(f"stacked data equation residual {residual:.2e}")
    return g


def synthesize_agent(rec: DataRecord, q: np.ndarray) -> NoiselessSynthesis:
    """Run the full per-agent chain: gain, value matrix, data factors."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    gamma, k0 = initial_gain(rec, q)
    p_mat = riccati_from_data(rec, gamma, q)
    g = solve_g(rec, k0)
    u_factor = gamma @ np.linalg.inv(rec.x_minus @ gamma)
    bk_hat = rec.x_plus @ g
    a_hat = rec.x_plus @ u_factor - bk_hat

    eye = np.eye(rec.n)
    xm_g = rec.x_minus @ gamma
    xp_g = rec.x_plus @ gamma
    contraction = np.block([[xm_g - eye, xp_g], [xp_g.T, xm_g]])
    closed = rec.x_plus @ u_factor
    residuals = {
        "gain_symmetry": float(np.max(np.abs(xm_g - xm_g.T))),
        "gain_contraction": float(np.linalg.eigvalsh((contraction + contraction.T) / 2)[0]),
        "gain_scale": float(np.linalg.eigvalsh((xm_g + xm_g.T) / 2 - eye)[0]),
        "value_inequality": float(np.linalg.eigvalsh(closed.T @ p_mat @ closed - p_mat + q)[0]),
        "value_psd": float(np.linalg.eigvalsh(p_mat)[0]),
    }
    return NoiselessSynthesis(gamma=gamma, k0=k0, q=q, p_mat=p_mat, g=g, u_factor=u_factor,
                              bk_hat=bk_hat, a_hat=a_hat, constraint_residuals=residuals)


# ---------------------------------------------------------------------------
# gain synchronization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MareGain:
    """Averaging gain O = -(Lambda + R)^-1 Lambda from the modified Riccati
    fixed point Lambda = Lambda - (1 - delta^2) Lambda (Lambda + R)^-1 Lambda + Q."""

    lambda_mat: np.ndarray
    r_tilde: np.ndarray
    q_tilde: np.ndarray
    delta: float
    o_gain: np.ndarray
    iterations: int = 0


def solve_mare(r_tilde: np.ndarray, q_tilde: np.ndarray, delta: float,
               tol: float = MARE_TOL, cap: int = MARE_CAP) -> tuple[np.ndarray, int]:
    """Fixed-point iteration from Lambda_0 = Q; contraction for delta < 1."""
    lam = q_tilde.copy()
    shrink = 1.0 - delta ** 2
    for k in range(cap):
        nxt = lam - shrink * lam @ np.linalg.solve(lam + r_tilde, lam) + q_tilde
        nxt = (nxt + nxt.T) / 2
        if np.linalg.norm(nxt - lam) <= tol * max(1.0, np.linalg.norm(nxt)):
            return nxt, k + 1
        lam = nxt
    raise NoConvergenceError(f"modified Riccati fixed point did not converge in {cap} iterations")


def gain_consensus_matrix(dff: RowStochasticDff, r_tilde, q_tilde,
                          delta: float | None = None) -> MareGain:
    """Design the gain-synchronization matrix for a follower averaging matrix.

    delta defaults to the midpoint (mu + 1)/2 of its admissible interval.
    """
    r_tilde = np.atleast_2d(np.asarray(r_tilde, dtype=float))
    q_tilde = np.atleast_2d(np.asarray(q_tilde, dtype=float))
    if dff.mu >= 1.0:
        raise SubdominantModulusError(
            f"sub-dominant modulus {dff.mu:.6f} >= 1; averaging does not contract")
    if delta is None:
        delta = (dff.mu + 1.0) / 2.0
    if delta <= dff.mu:
        raise ValueError(f"delta must exceed the sub-dominant modulus {dff.mu:.4f}, got {delta}")
    if delta >= 1.0:
        log.warning("delta %.4f >= 1: fixed point has no solution, iteration will diverge", delta)
    lam, iters = solve_mare(r_tilde, q_tilde, delta)
    o_gain = -np.linalg.solve(lam + r_tilde, lam)
    return MareGain(lambda_mat=lam, r_tilde=r_tilde, q_tilde=q_tilde,
                    delta=float(delta), o_gain=o_gain, iterations=iters)


# ---------------------------------------------------------------------------
# consensus region
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConsensusRegion:
    """Set of complex couplings eta for which the averaged gain keeps every
    network mode contractive.

    invertible-input mode: membership is |eta - 1|^2 < bound.
    general mode: membership is a|eta-1|^2 + b|eta|^2 + c|eta| + d <= 1.
    """

    kind: str                     # "invertible-b" | "general-b"
    bound: float | None = None
    coeffs: tuple | None = None   # (a, b, c, d)
    r_mat: np.ndarray | None = None
    f_mat: np.ndarray | None = None
    p_total: np.ndarray | None = None

    def contains(self, eta: complex) -> bool:
        if self.kind == "invertible-b":
            return bool(abs(eta - 1.0) ** 2 < self.bound)
        a, b, c, d = self.coeffs
        return bool(a * abs(eta - 1.0) ** 2 + b * abs(eta) ** 2 + c * abs(eta) + d <= 1.0)


def _inv_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.T) / 2)
    if w[0] <= 0:
        raise RegionNotDefiniteError(f"scaling matrix not positive definite (min eig {w[0]:.2e})")
    return v @ np.diag(w ** -0.5) @ v.T


def consensus_region(agents: list[NoiselessSynthesis], invertible_b: bool = True) -> ConsensusRegion:
    """Aggregate per-agent synthesis results into the network coupling region."""
    if not agents:
        raise RegionNotDefiniteError("need at least one synthesized agent")
    p_total = sum(a.p_mat for a in agents)
    f_mat = sum(a.q + (p_total - a.p_mat) for a in agents)
    f_half = _inv_sqrt(f_mat)

    if invertible_b:
        r_mat = sum(a.bk_hat.T @ a.p_mat @ a.bk_hat
                    + a.a_hat.T @ (p_total - a.p_mat) @ a.a_hat
                    for a in agents)
        core = f_half @ r_mat @ f_half
        bound = 1.0 / float(np.linalg.svd(core, compute_uv=False)[0])
        return ConsensusRegion(kind="invertible-b", bound=bound,
                               r_mat=r_mat, f_mat=f_mat, p_total=p_total)

    def sigma(m):
        s = np.linalg.svd(f_half @ m @ f_half, compute_uv=False)
        return float(s[0]) if s.size else 0.0

    a_co = sigma(sum(a.bk_hat.T @ a.p_mat @ a.bk_hat for a in agents))
    b_co = sigma(sum(a.bk_hat.T @ (p_total - a.p_mat) @ a.bk_hat for a in agents))
    cross = sum(agents[j].bk_hat.T @ agents[j].p_mat @ agents[i].bk_hat
                + agents[i].bk_hat.T @ agents[i].p_mat @ agents[j].bk_hat
                for i in range(len(agents)) for j in range(len(agents)) if i != j)
    c_co = sigma(cross) if len(agents) > 1 else 0.0
    d_co = sigma(sum(a.a_hat.T @ (p_total - a.p_mat) @ a.a_hat for a in agents))
    return ConsensusRegion(kind="general-b", coeffs=(a_co, b_co, c_co, d_co),
                           f_mat=f_mat, p_total=p_total)


def verify_region(wgm: WeightedGraphMatrix, region: ConsensusRegion) -> bool:
    """True iff every weighted-graph-matrix eigenvalue sits in the region."""
    return all(region.contains(complex(e)) for e in np.atleast_1d(wgm.eigenvalues))


def are_residual(a: np.ndarray, b: np.ndarray, q: np.ndarray, p: np.ndarray) -> float:
    """Harness-side Riccati residual of a value matrix against the true plant:

        || A'PA - A'PB (B'PB)^-1 B'PA + Q - P ||_F
    """
    gain_part = a.T @ p @ b @ np.linalg.solve(b.T @ p @ b, b.T @ p @ a)
    return float(np.linalg.norm(a.T @ p @ a - gain_part + q - p))
