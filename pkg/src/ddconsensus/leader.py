"""Leader-only synthesis: one agent samples data, the network inherits.

The leader runs the same trace-minimal gain and value-matrix programs as a
follower would, then summarizes its closed loop in a single scalar theta.
Stability of the whole network reduces to finding a real-centered circle
covering the weighted-graph-matrix spectrum whose radius/center ratio beats
theta^(-1/2); its center fixes the broadcast coupling gain c0 = 1/h0.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, NonPositiveSpectrumError
from .netgraph import WeightedGraphMatrix
from .noiseless import initial_gain, riccati_from_data, solve_g
from .plant import DataRecord

log = logging.getLogger(__name__)

GOLDEN_TOL = 1e-10


@dataclass(frozen=True)
class LeaderSynthesis:
    k0: np.ndarray      # p x n broadcast gain
    p_mat: np.ndarray   # n x n value matrix
    m: np.ndarray       # T x n minimum-norm data factor with [k0; 0] = [U_-; X_-] m
    theta: float        # sigma_max(Q^-1/2 m' X_+' P X_+ m Q^-1/2)


@dataclass(frozen=True)
class EnclosingCircle:
    """Real-centered circle C(h0, r0) covering the coupling spectrum."""

    h0: float
    r0: float
    c0: float           # broadcast coupling gain 1 / h0
    ratio: float        # r0 / h0 at the optimum
    threshold: float    # theta^(-1/2)

    @property
    def margin(self) -> float:
        return self.threshold - self.ratio


def leader_gain(rec: DataRecord, q: np.ndarray) -> LeaderSynthesis:
    """Synthesize the leader's gain, value matrix, and closed-loop statistic."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    gamma, k0 = initial_gain(rec, q)
    p_mat = riccati_from_data(rec, gamma, q)
    m = solve_g(rec, k0)

    w, v = np.linalg.eigh((q + q.T) / 2)
    q_half_inv = v @ np.diag(w ** -0.5) @ v.T
    core = q_half_inv @ m.T @ rec.x_plus.T @ p_mat @ rec.x_plus @ m @ q_half_inv
    theta = float(np.linalg.svd(core, compute_uv=False)[0])
    return LeaderSynthesis(k0=k0, p_mat=p_mat, m=m, theta=theta)


def _cover_radius(eigs: np.ndarray, h: float) -> float:
    return float(np.max(np.hypot(h - eigs.real, eigs.imag)))


def min_ratio_circle(eigs: np.ndarray, tol: float = GOLDEN_TOL) -> tuple[float, float]:
    """Golden-section search for the center minimizing cover-radius / center.

    The squared ratio is a convex quadratic in 1/h maximized over eigenvalues,
    hence unimodal in h; centers range over (0, 10 max|eig|].
    """
    eigs = np.atleast_1d(np.asarray(eigs, dtype=complex))
    lo, hi = tol, 10.0 * float(np.max(np.abs(eigs)))
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc = _cover_radius(eigs, c) / c
    fd = _cover_radius(eigs, d) / d
    while hi - lo > tol:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = _cover_radius(eigs, c) / c
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = _cover_radius(eigs, d) / d
    h = 0.5 * (lo + hi)
    return h, _cover_radius(eigs, h) / h


def enclosing_circle(wgm: WeightedGraphMatrix, theta: float) -> EnclosingCircle:
    """Pick the ratio-minimal covering circle and test it against theta.

    Raises InfeasibleError carrying the achieved ratio when no real-centered
    circle meets the threshold.
    """
    eigs = np.atleast_1d(np.asarray(wgm.eigenvalues, dtype=complex))
    if eigs.size == 0:
        raise NonPositiveSpectrumError("empty coupling spectrum")
    if np.any(eigs.real <= 0):
        raise NonPositiveSpectrumError(
            "coupling spectrum has a non-positive real part; graph lacks a "
            "leader-rooted spanning tree")
    threshold = float("inf") if theta <= 0 else theta ** -0.5
    h0, ratio = min_ratio_circle(eigs)
    if not ratio < threshold:
        raise InfeasibleError(
            f"no qualifying circle: best ratio {ratio:.6f} >= threshold {threshold:.6f}")
    return EnclosingCircle(h0=h0, r0=_cover_radius(eigs, h0), c0=1.0 / h0,
                           ratio=ratio, threshold=threshold)


@dataclass(frozen=True)
class LeaderProtocolInit:
    """Initial gain/coupling tables for the broadcast protocol.

    The leader holds its synthesized values; followers start from zero and
    acquire them through the averaging dynamics, which converge regardless of
    the followers' initialization on a leader-rooted graph.
    """

    gains: np.ndarray      # (N+1) x p x n, index 0 = leader
    couplings: np.ndarray  # (N+1,)


def leader_protocol_gains(k0: np.ndarray, c0: float, n_followers: int) -> LeaderProtocolInit:
    k0 = np.atleast_2d(np.asarray(k0, dtype=float))
    gains = np.zeros((n_followers + 1, *k0.shape))
    gains[0] = k0
    couplings = np.zeros(n_followers + 1)
    couplings[0] = c0
    return LeaderProtocolInit(gains=gains, couplings=couplings)
