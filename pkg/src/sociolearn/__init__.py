"""Stationary social learning about an AR(1) state on observation networks."""

from .exceptions import (
    ConfigError,
    DivergenceError,
    IdentificationError,
    IllConditionedNeighborhood,
    NetworkError,
    NonContractiveWeights,
    NumericalError,
    SocialLearningError,
)
from .network import (
    BlockSpec,
    Environment,
    Network,
    SignalProfile,
    gen_circle,
    gen_complete,
    gen_erdos_renyi,
    gen_sbm,
    load_edge_list,
    load_signal_file,
)
from .kernel import (
    EquilibriumResult,
    WeightProfile,
    best_response_weights,
    phi_step,
    residual,
    shift_block,
    solve_equilibrium,
    steady_state,
)

__version__ = "0.1.0"
