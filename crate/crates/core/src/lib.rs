//! Tabular reinforcement learning from a human trainer's scalar feedback.
//!
//! The crate holds the environments ([`mdp`]), exact dynamic-programming
//! solvers ([`solvers`]), the softmax policy machinery ([`gradient`]), the
//! learners ([`agents`]) and the synthetic and human trainers ([`feedback`]).

pub mod agents;
pub mod episode;
pub mod feedback;
pub mod gradient;
pub mod mdp;
pub mod policy;
pub mod rng;
pub mod solvers;
