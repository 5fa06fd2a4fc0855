//! Checks of the entropy formulation, the Skorohod condition and the
//! stability estimates on recorded runs.

mod entropy;
mod monitors;
mod report;

pub use entropy::{entropy_residual, Entropy, EntropyResidual, EntropyTestPack, Jet, SpaceProfile, TimeCutoff};
pub use monitors::{apriori_monitor, initial_attainment, l1_stability, skorohod_defect, L1Stability};
pub use report::{mean_stderr, DiagnosticsReport, ReportEntry};
