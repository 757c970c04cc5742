//! Stochastic replicator dynamics under payoff shocks.
//!
//! Population games ([`game`]), shock models ([`noise`]), noise-adjusted
//! games ([`modified`]), the drift and diffusion of each dynamic
//! ([`dynamics`]), a seeded Euler–Maruyama engine ([`engine`]) and the
//! ensemble statistics used to check long-run behaviour ([`analysis`]).

pub mod analysis;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod game;
pub mod modified;
pub mod noise;
pub mod rng;
pub mod state;

pub use dynamics::{Dynamics, DynamicsField, ModelKind, SecondOrderField, SecondOrderState};
pub use engine::{integrate, simulate_ensemble, EnsembleOptions, EnsembleResult, IntegratorConfig, Scheme, Trajectory};
pub use error::{Error, Result};
pub use game::{Dominance, Equilibrium, GameSpec, PayoffModel};
pub use noise::{NoiseKind, NoiseModel};
pub use rng::{IncrementSource, NoiseStream};
pub use state::{Layout, MixedStrategy, PopulationState};
