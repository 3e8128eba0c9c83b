//! Certify recorded follower data for leader-follower output
//! synchronization, synthesize the distributed protocol directly from the
//! data, and check the result by closed-loop network simulation.

pub mod datamod;
pub mod error;
pub mod informativity;
pub mod leaderspec;
pub mod matcore;
pub mod netgraph;
pub mod scenario;
pub mod simloop;
pub mod synthesis;

pub use error::{Error, Result};
pub use matcore::{Complex, Matrix};
