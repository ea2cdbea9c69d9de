"""Noisy-data synthesis: informativity LMI with an S-procedure noise absorber.

Each agent solves one low-dimensional LMI over (Phi, F, eps, gamma, tau).  The
S-procedure multiplier eps folds the quadratic noise prior into the stability
condition, so feasibility certifies one gain F Phi^-1 against every system
consistent with the data, over the whole coupling uncertainty |Delta| <= nu.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import sdpcore
from .errors import (
    InfeasibleError,
    NonPositiveSpectrumError,
    NumericalFailureError,
)
from .plant import DataRecord, NoiseBound, Plant, check_noise_bound

log = logging.getLogger(__name__)

LMI_MARGIN = 1e-6
SAMPLE_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class NoisySynthesis:
    """LMI certificate blocks and the gain they induce."""

    phi: np.ndarray        # n x n positive definite
    f: np.ndarray          # p x n
    eps: float             # S-procedure multiplier
    gamma_scalar: float    # conditioning slack in the (1,1) corner
    tau: float             # coupling-uncertainty multiplier
    nu: float              # spectrum spread (lN - l1) / (lN + l1)
    k0: np.ndarray         # p x n gain F Phi^-1
    alpha: float | None = None  # coupling gain 2 / (l1 + lN) when known


def spectrum_gains(l_ff: np.ndarray) -> tuple[float, float]:
    """Coupling gain alpha = 2/(l1+lN) and spread nu = (lN-l1)/(lN+l1).

    Requires a symmetric follower Laplacian block with a positive spectrum
    (undirected follower subgraph, leader-rooted connectivity).
    """
    l_ff = np.atleast_2d(np.asarray(l_ff, dtype=float))
    if not np.allclose(l_ff, l_ff.T, atol=1e-10):
        raise NonPositiveSpectrumError("follower Laplacian block must be symmetric")
    eigs = np.linalg.eigvalsh(l_ff)
    l1, ln = float(eigs[0]), float(eigs[-1])
    if l1 <= 0:
        raise NonPositiveSpectrumError(
            f"smallest follower Laplacian eigenvalue {l1:.3e} <= 0; "
            "graph is not leader-rooted connected")
    return 2.0 / (l1 + ln), (ln - l1) / (ln + l1)


def informative_gain(rec: DataRecord, bound: NoiseBound, nu: float,
                     alpha: float | None = None) -> NoisySynthesis:
    """Solve the per-agent informativity LMI and return its certificate.

    The feasibility core is a six-block LMI in (Phi, F, tau) minus the
    eps-scaled data quadratic form built from [X_+; -X_-; -U_-] and the noise
    prior.  gamma is maximized under the normalization Phi <= I to keep Phi
    away from singularity; the LMI itself is scale invariant, so the
    normalization costs no generality.

    Raises InfeasibleError when the data are not informative for consensus
    (including the degenerate case of a noise prior inconsistent with the
    data, which surfaces as an unbounded certificate).
    """
    if not 0.0 <= nu < 1.0:
        raise ValueError(f"nu must lie in [0, 1), got {nu}")
    n, p, horizon = rec.n, rec.p, rec.horizon
    if bound.n22.shape[0] != horizon or bound.n11.shape[0] != n:
        raise InfeasibleError(
            f"noise bound sized ({bound.n11.shape[0]}, {bound.n22.shape[0]}), "
            f"data is ({n}, {horizon})")

    prob = sdpcore.SdpProblem("informative_gain")
    phi = prob.symmetric("phi", n)
    f = prob.matrix("f", p, n)
    eps = prob.scalar("eps", nonneg=True)
    gam = prob.scalar("gam")
    tau = prob.scalar("tau")

    z = lambda r, c: np.zeros((r, c))
    eye_n, eye_p = np.eye(n), np.eye(p)
    core = sdpcore.block([
        [phi - gam * eye_n, z(n, n), z(n, p), z(n, n), z(n, p), z(n, n)],
        [z(n, n), z(n, n), z(n, p), phi,      z(n, p), z(n, n)],
        [z(p, n), z(p, n), tau * (-nu ** 2 * eye_p), f, z(p, p), z(p, n)],
        [z(n, n), phi,     f.T,     phi,      f.T,     z(n, n)],
        [z(p, n), z(p, n), z(p, p), f,        tau * eye_p, z(p, n)],
        [z(n, n), z(n, n), z(n, p), z(n, n),  z(n, p), eye_n],
    ])
    selector = np.block([
        [eye_n, rec.x_plus],
        [z(n, n), -rec.x_minus],
        [z(p, n), -rec.u_minus],
        [z(2 * n + p, n), z(2 * n + p, horizon)],
    ])
    data_form = selector @ bound.stacked() @ selector.T

    prob.require_psd(core - eps * data_form, strict=True, label="informativity")
    prob.require_psd(phi, strict=True, label="phi_pd")
    prob.require_psd(np.eye(n) - phi, label="phi_normalization")
    prob.require_psd(tau * np.array([[1.0]]) - LMI_MARGIN * np.eye(1), label="tau_pos")
    prob.require_psd(gam * np.array([[1.0]]) - LMI_MARGIN * np.eye(1), label="gam_pos")
    prob.maximize(gam)

    sol = sdpcore.solve(prob)
    if sol.status == "infeasible":
        raise InfeasibleError("data are not informative for consensus")
    if sol.status == "numerical-failure" and "unbounded" in sol.detail:
        raise InfeasibleError(
            "noise prior is inconsistent with the data (unbounded certificate); "
            "no system set to be informative about")
    if not sol.ok:
        raise NumericalFailureError(f"informativity LMI failed: {sol.detail}")

    phi_v = sol.values["phi"]
    f_v = sol.values["f"]
    return NoisySynthesis(phi=phi_v, f=f_v, eps=float(sol.values["eps"]),
                          gamma_scalar=float(sol.values["gam"]), tau=float(sol.values["tau"]),
                          nu=float(nu), k0=f_v @ np.linalg.inv(phi_v), alpha=alpha)


def sample_consistent_systems(rec: DataRecord, bound: NoiseBound, count: int,
                              rng: np.random.Generator, scale: float = 0.05) -> list[Plant]:
    """Draw systems consistent with the record under the noise prior.

    Perturbs the record's noise block along the row space of [U_-; X_-], so
    the consistency equation X_+ - D' = [B A][U_-; X_-] is solvable exactly;
    each perturbation is shrunk until the prior holds.  Used by harness-side
    robustness spot checks.
    """
    w = rec.stacked()
    if rec.d is not None:
        d_base = rec.d
    else:
        # least-squares residual: the minimal consistent noise realization
        d_base = rec.x_plus @ (np.eye(rec.horizon) - np.linalg.pinv(w) @ w)
    if not check_noise_bound(d_base, bound):
        raise InfeasibleError("record's base noise violates the prior; no consistent systems")

    w_pinv = np.linalg.pinv(w)
    systems = []
    while len(systems) < count:
        e = scale * rng.standard_normal((rec.n, rec.n + rec.p))
        d_new = d_base + e @ w
        for _ in range(80):
            if check_noise_bound(d_new, bound):
                break
            e *= 0.7
            d_new = d_base + e @ w
        else:
            continue
        ba = (rec.x_plus - d_new) @ w_pinv
        residual = np.linalg.norm(rec.x_plus - d_new - ba @ w)
        if residual > SAMPLE_RESIDUAL_TOL:
            continue
        systems.append(Plant(a=ba[:, rec.p:], b=ba[:, :rec.p]))
    return systems
