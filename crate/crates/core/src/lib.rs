//! Agent-based simulator of a consumer-to-consumer marketplace whose users are
//! scored by EigenTrust, with six fraud threat models and tools to classify
//! the resulting trust dynamics.

pub mod agents;
pub mod analysis;
pub mod marketplace;
pub mod network;
pub mod simulation;
pub mod trust;

pub use agents::{Camouflage, Quality, ThreatModel, ThreatModelSpec};
pub use analysis::{classify_dynamics, CohortSeries, DynamicsVerdict, Shape, Thresholds};
pub use network::{Role, Roster, TradeGraph};
pub use simulation::{run_simulation, SimConfig, SimError, SimulationOutput, TrustTimeSeries};
pub use trust::{NodeId, RatingLedger};
