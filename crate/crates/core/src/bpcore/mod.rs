//! Message passing over the space of network supports.

mod entropy;
mod graph;
mod propagation;
mod weights;

pub use entropy::{bethe_entropy, entropy_point, log_grid, sigma_curve, EntropyCurve, EntropyPoint};
pub use graph::{build_factor_graph, required_degree, FactorGraph, FactorLabel};
pub use propagation::{
    bp_fixed_point, bp_fixed_point_from, link_marginals, live_marginals, expected_sparsity, BpOptions,
    FixedPoint, Fugacity, MessageSet,
};
pub use weights::node_weights;
