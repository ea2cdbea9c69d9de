"""Data-driven leader-follower consensus toolkit.

Synthesizes distributed consensus controllers for unknown discrete-time linear
multi-agent systems directly from locally collected data, computes data-based
stability certificates, and simulates the closed-loop network.
"""

from .config import ExperimentConfig, load_config, parse_config
from .errors import (
    ConfigError,
    ConsensusToolkitError,
    DimensionMismatchError,
    EigenFailureError,
    GraphShapeError,
    HorizonTooShortError,
    InfeasibleError,
    LeaderInEdgeError,
    NegativeWeightError,
    NoConvergenceError,
    NonPositiveSpectrumError,
    NumericalFailureError,
    RankDeficientError,
    RegionNotDefiniteError,
    SubdominantModulusError,
)
from .experiment import ExperimentReport, emit_plot_data, run_experiment
from .leader import (
    EnclosingCircle,
    LeaderProtocolInit,
    LeaderSynthesis,
    enclosing_circle,
    leader_gain,
    leader_protocol_gains,
)
from .netgraph import (
    NetworkGraph,
    RowStochasticDff,
    WeightedGraphMatrix,
    build_graph,
    graph_from_edges,
    has_leader_spanning_tree,
    row_stochastic_dff,
    weighted_graph_matrix,
)
from .noiseless import (
    ConsensusRegion,
    MareGain,
    NoiselessSynthesis,
    are_residual,
    consensus_region,
    gain_consensus_matrix,
    initial_gain,
    riccati_from_data,
    solve_g,
    synthesize_agent,
    verify_region,
)
from .noisy import (
    NoisySynthesis,
    informative_gain,
    sample_consistent_systems,
    spectrum_gains,
)
from .plant import (
    DataRecord,
    NoiseBound,
    Plant,
    check_noise_bound,
    check_rank,
    collect_data,
    export_data_record,
    import_data_record,
    is_controllable,
)
from .sim import (
    Trace,
    certify_network,
    export_trace_csv,
    is_schur,
    run_leader_protocol,
    run_noiseless_protocol,
    run_noisy_protocol,
)

__version__ = "0.1.0"
