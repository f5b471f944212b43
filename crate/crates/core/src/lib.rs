//! Analytic packet delivery model for broadcast 802.11p vehicle-to-vehicle
//! links, with a discrete-event CSMA/CA simulator to validate it.

pub mod config;
pub mod error;
pub mod eval;
pub mod fer;
pub mod grid;
pub mod load;
pub mod mac;
pub mod pathloss;
pub mod propagation;
pub mod pdr;
pub mod scenario;
pub mod sim;
mod table;

pub use config::{packet_airtime, PathlossKind, ScenarioConfig};
pub use error::{Error, Result};
pub use eval::{compare, mad, sweep_runner, ComparisonReport, SweepSpec, Tolerances};
pub use fer::FerTable;
pub use grid::{DbGrid, DiscretePdf};
pub use load::{cbr_from_upper, estimate_cbr, fit_compression, CbrCoefficients, CbrEstimate};
pub use mac::{InterferencePdf, LatticeEvaluator, LinkGeometry, MacErrors};
pub use pathloss::PathlossModel;
pub use propagation::{PowerDistribution, PowerPdf, TruncatedSnrPdf};
pub use scenario::Scenario;
pub use pdr::{compose_pdr, sweep, sweep_with, Composition, Deltas, Interferers, LinkCurve, LinkPoint};
pub use sim::{measure_cbr, run_sim, run_sim_on, Outcome, SimParams, SimReport, SimScenario};
