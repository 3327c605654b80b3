//! Risk-seeking conservative policy iteration (RS-CPI) for finite-horizon
//! Dec-POMDPs with agent-state (finite-state controller) policies.
//!
//! The crate is organised bottom-up:
//!
//! * [`parser`] reads the `.dpomdp` benchmark format into a [`DecPomdpModel`];
//! * [`model`] holds the dense model and joint-space indexing;
//! * [`policy`] holds per-agent stochastic controllers;
//! * [`risk`] is the entropic risk kernel and single-agent MDP recursions;
//! * [`evaluation`] computes exact and sampled policy values;
//! * [`solver`] runs the RS-CPI sweeps.

pub mod error;
pub mod evaluation;
pub mod model;
pub mod parser;
pub mod policy;
pub mod risk;
pub mod solver;

mod layout;

pub use error::{EvalError, ModelError, NumericError, PolicyError, RiskError, SolverError};
pub use evaluation::{
    evaluate_exact, evaluate_forward, evaluate_risk, forward_marginals, rollout_monte_carlo,
    partial_risk_value, MarginalTrajectory, MonteCarloEstimate,
};
pub use model::{
    make_initial_distribution, matrix_game_model, DecPomdpModel, InitialObservation, JointIndexer,
    ModelNames, ModelParts,
};
pub use policy::{mix_policies, random_policy, AgentPolicy, DeterministicAgentSlice, JointPolicy};
pub use risk::{certainty_equivalent, weighted_logmeanexp, RiskParameter};
pub use parser::{compile_model, load_dpomdp, parse_dpomdp, write_dpomdp, DpomdpError};
pub use solver::{
    backward_tilted_values, rscpi, AgentOrdering, LambdaSchedule, SolveResult, SolverConfig,
};
