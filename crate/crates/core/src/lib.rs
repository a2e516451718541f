//! Stability of periodic play in normal-form games.
//!
//! Given a periodic walk in a game's preference graph, decides whether it is a
//! stable limit cycle of best-response dynamics (and hence of the replicator
//! dynamic) through the spectrum of the walk's Poincaré matrix. Both dynamics
//! can also be simulated directly to confirm verdicts, and cyclic sink
//! equilibria can be certified.

pub mod analysis;
pub mod brd;
pub mod builtins;
pub mod error;
pub mod export;
pub mod game;
pub mod graph;
pub mod io;
pub mod random;
pub mod rd;
pub mod stability;

pub use analysis::{run_analysis, AnalysisOptions, AnalysisReport};
pub use error::{BrdError, GameError, RdError, StabilityError, WalkError};
pub use game::{Game, MixedProfile, PayoffPoint, ProfileDistribution, PureProfile};
pub use graph::{Arc, PreferenceGraph, SinkComponent, Walk};
pub use stability::{StabilityVerdict, Tolerances, VerdictStatus};
