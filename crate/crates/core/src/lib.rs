//! Stochastic kidney-exchange clearing.
//!
//! Pairs and non-directed donors form an [`graph::ExchangeGraph`] whose edges
//! fail independently with known probabilities. The crate builds and solves
//! cycle/chain packing models that maximize expected matched weight
//! ([`formulations`]), trade expectation against tail risk ([`cvar`]), scale
//! to long cycles by column generation ([`bnp`]) and scores all of them
//! against simulated edge failures ([`sim`]).

pub mod bnp;
pub mod cvar;
pub mod error;
pub mod expected;
pub mod fixtures;
pub mod formulations;
pub mod gen;
pub mod graph;
pub mod io;
pub mod milp;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
