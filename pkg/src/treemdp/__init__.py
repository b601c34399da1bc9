"""Near-optimal local policies for multi-agent MDPs on one-directional trees."""

from .chain import (
    Distribution,
    InducedChain,
    build_joint,
    marginalize,
    node_marginal,
    state_index,
    stationary,
)
from .llps import backward_pass, forward_pass, solve
from .model import (
    DirectedTree,
    ProblemInstance,
    TransitionParams,
    induced_transition,
    k_hop_path,
    parse_instance,
    random_instance,
    random_certified_instance,
    serialize_instance,
    validate_instance,
)
from .oracle import decay_gap, exact_total_reward, exhaustive_search, decay_certificate, closed_form_b
from .truncate import approx_marginal, approx_node_reward, approx_total_reward, truncated_chain

__version__ = "0.1.0"
