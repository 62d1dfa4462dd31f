//! Concrete instances of the abstract machinery.

pub mod shift;
pub mod siegel;

pub use shift::shift_exp_demo;
pub use siegel::{
    divisor_table, oracle_linearize, siegel_quasi_inverse, siegel_run, DivisorTable, SiegelConfig, SiegelModel,
    SiegelProblem, SiegelReport,
};
