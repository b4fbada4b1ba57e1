//! Repair and maintenance of machines spread over a network.
//!
//! A single repairer moves between nodes of a graph. Machines degrade
//! stochastically and cost more the worse they get; the repairer chooses
//! where to go and when to repair. The crate provides:
//!
//! - [`network`]: layouts (lattice, star, complete) with shortest paths
//! - [`instance`]: instance data, the random generator and JSON files
//! - [`mdp`]: the uniformized chain, costs, rewards and the simulator
//! - [`dp`]: policy evaluation and policy iteration
//! - [`index_policy`]: repair statistics, indices and the index heuristics
//! - [`polling`]: cyclic exhaustive-service tours
//! - [`opi`]: rollout-based online policy improvement
//! - [`experiments`]: benchmark batches, suboptimality records and tables
//! - [`fixtures`]: reference instances with known answers

pub mod dp;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod index_policy;
pub mod instance;
pub mod mdp;
pub mod network;
pub mod opi;
pub mod polling;
pub mod rng;

pub use error::{Error, Result};
pub use instance::{CostKind, CostModel, InstanceParameters};
pub use mdp::{Action, DecisionRule, SimulationReport, StateKey, StateSpace, SystemState};
pub use network::{NetworkLayout, NodeId};
