//! Scalar numerical building blocks: root finding, the lower Lambert W
//! branch, adaptive quadrature and expectations over fading laws.

pub mod density;
pub mod lambert;
pub mod quadrature;
pub mod roots;

pub use density::{expectation, log_expectation_exp, log_sum_exp, Density};
pub use lambert::lambert_w_m1;
pub use quadrature::{integrate_partition, Estimate, QuadConfig};
pub use roots::{expand_upward, find_root, try_find_root, Bracket, SolverConfig};
