"""Request/response models for the synthesis service.

Agents ship their raw input/state samples as nested lists; the service
answers with gains and certificates.  The experiment endpoint reuses the
ExperimentConfig model directly as its request body.
"""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field

Matrix = list[list[float]]


class DataRecordModel(BaseModel):
    u_minus: Matrix
    x: Matrix


class NoiseBoundModel(BaseModel):
    n11: Matrix
    n12: Optional[Matrix] = None
    n22: Matrix


class GraphRequest(BaseModel):
    adjacency: Optional[Matrix] = None
    edges: Optional[list[tuple[int, int, float]]] = None
    n_nodes: Optional[int] = None
    undirected_followers: bool = True
    leader_root: bool = True


class GraphAnalysis(BaseModel):
    n_followers: int
    has_leader_spanning_tree: bool
    follower_subgraph_undirected: bool
    z: float
    l_ff: Matrix
    weighted_matrix_eigenvalues_real: list[float]
    weighted_matrix_eigenvalues_imag: list[float]
    max_distance_to_one: float
    averaging_mu: float
    averaging_degenerate: bool


class NoiselessSynthesisRequest(BaseModel):
    record: DataRecordModel
    q: Optional[Matrix] = None


class NoiselessSynthesisResponse(BaseModel):
    k0: Matrix
    p_mat: Matrix
    g: Matrix
    stacked_equation_residual: float


class NoisySynthesisRequest(BaseModel):
    record: DataRecordModel
    bound: NoiseBoundModel
    nu: float = Field(ge=0.0, lt=1.0)


class NoisySynthesisResponse(BaseModel):
    feasible: bool
    k0: Optional[Matrix] = None
    eps: Optional[float] = None
    gamma: Optional[float] = None
    tau: Optional[float] = None
    detail: str = ""


class LeaderSynthesisRequest(BaseModel):
    record: DataRecordModel
    q: Optional[Matrix] = None
    graph: GraphRequest


class LeaderSynthesisResponse(BaseModel):
    feasible: bool
    k0: Matrix
    theta: float
    h0: Optional[float] = None
    r0: Optional[float] = None
    c0: Optional[float] = None
    ratio: Optional[float] = None
    threshold: float = 0.0
    detail: str = ""


class ExperimentResponse(BaseModel):
    mode: str
    exit_code: int
    certified: bool
    consensus_ok: bool
    final_error: Optional[float] = None
    first_below_tol: Optional[int] = None
    seed: Optional[int] = None
    agents: list = []
    region: Optional[dict] = None
    gain_sync: Optional[dict] = None
    spectrum: Optional[dict] = None
    leader: Optional[dict] = None
    diagnostics: list = []
    manifest: list = []
    out_dir: str = ""
