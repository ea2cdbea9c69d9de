"""Canonical regression fixtures.

``sec6_*`` is the six-agent benchmark used throughout the test suite: a
marginally stable planar rotation plant with a diagonal input matrix, one
leader and five followers with an undirected follower subgraph, and the
matching quadratic noise prior for the noisy pipeline.
"""
from __future__ import annotations

import numpy as np

from .netgraph import NetworkGraph, build_graph
from .plant import NoiseBound, Plant

SEC6_A = np.array([[0.707, 0.707], [-0.707, 0.707]])
SEC6_B = np.array([[0.2, 0.0], [0.0, 0.2]])

SEC6_L_FF = np.array([
    [3.0, -1.0, -2.0, 0.0, 0.0],
    [-1.0, 10.0, -1.0, -3.0, 0.0],
    [-2.0, -1.0, 10.0, 0.0, -2.0],
    [0.0, -3.0, 0.0, 10.0, -2.0],
    [0.0, 0.0, -2.0, -2.0, 4.0],
])


def sec6_plant() -> Plant:
    return Plant(a=SEC6_A.copy(), b=SEC6_B.copy())


def sec6_adjacency() -> np.ndarray:
    """Reconstruct the full 6-node adjacency from the follower Laplacian block.

    Row sums of the block are the leader-link weights; negated off-diagonal
    entries are the (symmetric) follower-follower weights.
    """
    n = SEC6_L_FF.shape[0]
    adj = np.zeros((n + 1, n + 1))
    adj[1:, 0] = SEC6_L_FF.sum(axis=1)
    adj[1:, 1:] = -(SEC6_L_FF - np.diag(np.diag(SEC6_L_FF)))
    return adj


def sec6_graph() -> NetworkGraph:
    return build_graph(sec6_adjacency())


def sec6_noise_bound(horizon: int) -> NoiseBound:
    """Quadratic prior N11 = 0.1 I, N22 = -I, N12 = 0 sized for a horizon."""
    n = SEC6_A.shape[0]
    return NoiseBound(n11=0.1 * np.eye(n), n12=np.zeros((n, horizon)),
                      n22=-np.eye(horizon))


def single_input_plant() -> Plant:
    """Controllable two-state, one-input plant.

    With one input channel the trace-minimal gain genuinely depends on the
    synthesis weight, so per-agent weights produce distinct local gains; the
    gain-synchronization studies use this plant for that reason.
    """
    return Plant(a=np.array([[0.9, 0.4], [-0.3, 0.7]]), b=np.array([[0.0], [1.0]]))


def gain_sync_weights() -> list[np.ndarray]:
    """Non-proportional per-agent weights giving well-separated local gains."""
    return [np.eye(2), np.diag([1.0, 3.0]), np.diag([2.0, 0.5]),
            np.diag([1.0, 0.2]), np.diag([3.0, 1.0])]


def unstable_plant() -> Plant:
    """Spectral radius 1.05 rotation; nothing stabilizes it with zero gain."""
    return Plant(a=1.05 * np.array([[np.cos(0.4), np.sin(0.4)],
                                    [-np.sin(0.4), np.cos(0.4)]]),
                 b=np.array([[0.1, 0.0], [0.0, 0.1]]))
