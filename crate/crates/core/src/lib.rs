//! A desk-scale laboratory for side-effect-aware reinforcement learning.
//!
//! The pieces fit together like this: [`ca`] provides a toroidal
//! Game-of-Life engine with typed, colored cells and an agent freeze zone;
//! [`env`] wraps it into a Markov decision process with procedurally
//! generated tasks; [`metrics`] scores side effects as the exact
//! Wasserstein-1 distance between the green cells of a counterfactual
//! (agent-free) rollout and the actual episode outcome; [`auxgen`] builds
//! randomly generated auxiliary reward functions from an unsupervised
//! observation encoder; [`learner`] is plain tabular/linear Q-learning;
//! [`aup`] combines them into the attainable-utility-preservation reward
//! transform and its phased training loop; [`theory`] holds exact
//! small-MDP machinery and a verifier for the communicability bound on
//! optimal-value change.

pub mod aup;
pub mod auxgen;
pub mod ca;
pub mod env;
pub mod learner;
pub mod metrics;
pub mod rng;
pub mod snapshot;
pub mod theory;

pub use rng::RngStream;
