"""FastAPI app exposing graph analysis, per-agent synthesis, and experiments.

The synthesis endpoints are the multi-client surface: each agent posts its own
locally collected record and receives its own gain.  The experiment endpoint
runs the full pipeline server-side and writes artifacts under the configured
output directory on the server's filesystem.
"""
from __future__ import annotations

import logging

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import netgraph, noiseless, noisy
from ..config import ExperimentConfig
from ..errors import ConfigError, ConsensusToolkitError, InfeasibleError
from ..experiment import run_experiment
from ..leader import enclosing_circle, leader_gain
from ..plant import DataRecord, NoiseBound
from . import schemas

log = logging.getLogger(__name__)


def _record(model: schemas.DataRecordModel) -> DataRecord:
    try:
        return DataRecord(u_minus=np.array(model.u_minus, dtype=float),
                          x=np.array(model.x, dtype=float))
    except ConsensusToolkitError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def _graph(model: schemas.GraphRequest) -> netgraph.NetworkGraph:
    try:
        if model.adjacency is not None:
            return netgraph.build_graph(np.array(model.adjacency, dtype=float),
                                        leader_root=model.leader_root)
        if model.edges is None or model.n_nodes is None:
            raise HTTPException(status_code=422,
                                detail="graph needs an adjacency matrix or edges + n_nodes")
        return netgraph.graph_from_edges(model.n_nodes, model.edges,
                                         undirected_followers=model.undirected_followers,
                                         leader_root=model.leader_root)
    except ConsensusToolkitError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def _mat(m: np.ndarray) -> list[list[float]]:
    return [[float(v) for v in row] for row in np.atleast_2d(m)]


def create_app() -> FastAPI:
    app = FastAPI(title="ddconsensus", version="0.1.0",
                  description="Data-driven leader-follower consensus synthesis service")

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/graph/analyze", response_model=schemas.GraphAnalysis)
    def analyze_graph(req: schemas.GraphRequest) -> schemas.GraphAnalysis:
        g = _graph(req)
        wgm = netgraph.weighted_graph_matrix(g)
        dff = netgraph.row_stochastic_dff(g)
        eigs = np.atleast_1d(wgm.eigenvalues).astype(complex)
        return schemas.GraphAnalysis(
            n_followers=g.n_followers,
            has_leader_spanning_tree=netgraph.has_leader_spanning_tree(g),
            follower_subgraph_undirected=netgraph.follower_subgraph_is_undirected(g),
            z=g.z,
            l_ff=_mat(g.l_ff),
            weighted_matrix_eigenvalues_real=[float(e.real) for e in eigs],
            weighted_matrix_eigenvalues_imag=[float(e.imag) for e in eigs],
            max_distance_to_one=float(np.max(np.abs(eigs - 1.0))),
            averaging_mu=dff.mu,
            averaging_degenerate=dff.degenerate,
        )

    @app.post("/synthesis/noiseless", response_model=schemas.NoiselessSynthesisResponse)
    def synthesize_noiseless(req: schemas.NoiselessSynthesisRequest):
        rec = _record(req.record)
        q = np.array(req.q, dtype=float) if req.q is not None else np.eye(rec.n)
        try:
            result = noiseless.synthesize_agent(rec, q)
        except ConsensusToolkitError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        target = np.vstack([result.k0, np.zeros((rec.n, rec.n))])
        residual = float(np.linalg.norm(rec.stacked() @ result.g - target))
        return schemas.NoiselessSynthesisResponse(
            k0=_mat(result.k0), p_mat=_mat(result.p_mat), g=_mat(result.g),
            stacked_equation_residual=residual)

    @app.post("/synthesis/noisy", response_model=schemas.NoisySynthesisResponse)
    def synthesize_noisy(req: schemas.NoisySynthesisRequest):
        rec = _record(req.record)
        try:
            bound = NoiseBound(
                n11=np.array(req.bound.n11, dtype=float),
                n12=(np.array(req.bound.n12, dtype=float) if req.bound.n12 is not None
                     else np.zeros((rec.n, rec.horizon))),
                n22=np.array(req.bound.n22, dtype=float))
        except ConsensusToolkitError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        try:
            s = noisy.informative_gain(rec, bound, req.nu)
        except InfeasibleError as exc:
            return schemas.NoisySynthesisResponse(feasible=False, detail=str(exc))
        except ConsensusToolkitError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return schemas.NoisySynthesisResponse(
            feasible=True, k0=_mat(s.k0), eps=s.eps, gamma=s.gamma_scalar, tau=s.tau)

    @app.post("/synthesis/leader", response_model=schemas.LeaderSynthesisResponse)
    def synthesize_leader(req: schemas.LeaderSynthesisRequest):
        rec = _record(req.record)
        g = _graph(req.graph)
        q = np.array(req.q, dtype=float) if req.q is not None else np.eye(rec.n)
        try:
            synth = leader_gain(rec, q)
        except ConsensusToolkitError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        wgm = netgraph.weighted_graph_matrix(g)
        threshold = float("inf") if synth.theta <= 0 else synth.theta ** -0.5
        try:
            circle = enclosing_circle(wgm, synth.theta)
        except InfeasibleError as exc:
            return schemas.LeaderSynthesisResponse(
                feasible=False, k0=_mat(synth.k0), theta=synth.theta,
                threshold=threshold, detail=str(exc))
        return schemas.LeaderSynthesisResponse(
            feasible=True, k0=_mat(synth.k0), theta=synth.theta, h0=circle.h0,
            r0=circle.r0, c0=circle.c0, ratio=circle.ratio, threshold=circle.threshold)

    @app.post("/experiments/run", response_model=schemas.ExperimentResponse)
    def run(cfg: ExperimentConfig) -> schemas.ExperimentResponse:
        try:
            report = run_experiment(cfg)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return schemas.ExperimentResponse(out_dir=cfg.out_dir, **report.to_dict())

    return app
