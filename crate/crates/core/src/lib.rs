//! Simulation and analysis toolkit for plasmonic-cavity-coupled
//! single-photon emitters.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cavity;
pub mod correlator;
pub mod fit;
mod linalg;
pub mod odmr;
pub mod photophysics;
pub mod pipeline;
pub mod scenario;

#[cfg(test)]
#[path = "../tests/common/oracle.rs"]
mod oracle;
pub mod sim;
pub mod stream;
