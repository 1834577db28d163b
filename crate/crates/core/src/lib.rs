//! Hosting capacity for flexible loads on radial distribution feeders.
//!
//! The pipeline runs feeder model -> residual capacity per interval ->
//! CVaR-constrained LP over the curtailment schedule, with an L1 penalty
//! that trades capacity for fewer interventions.

pub mod capacity;
pub mod feeder;
pub mod hosting;
pub mod lpcore;
pub mod risk;
pub mod study;
pub mod sweep;
pub mod timeseries;

pub use capacity::{residual_capacity, Binding, ResidualCapacitySeries};
pub use feeder::{parse_feeder, BusId, FeederNetwork, ImpedanceMatrices, PerUnitBase};
pub use hosting::{solve_hosting, HostingError, HostingProblemSpec, HostingSolution};
pub use lpcore::{solve_lp, LpProblem, LpSolution, LpStatus};
pub use risk::{empirical_cvar, RiskSpec};
pub use study::{Study, SyntheticStudyParams};
pub use timeseries::{FlexibleProfile, LoadDataset};
