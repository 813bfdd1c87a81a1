//! Adaptive choice-based preference elicitation.
//!
//! A user's preferences are a linear classifier `theta`: offered a question of
//! `m` alternatives, the model-consistent answer is the alternative with the
//! largest utility `theta'x`, and the observed response is that answer passed
//! through a discrete noise channel. The crate maintains a Bayesian posterior
//! over `theta`, chooses questions by entropy pursuit or knowledge gradient,
//! synthesizes questions with a prescribed predictive distribution, and
//! provides a simulation harness, an HTTP session service and a CLI.

pub mod belief;
pub mod channel;
pub mod cli;
pub mod error;
pub mod selection;
pub mod service;
pub mod simulation;

pub use error::{Error, Result};
