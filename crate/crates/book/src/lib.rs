//! The guide in `book/src`, compiled so that its snippets run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/delay-exponents.md")]
pub mod delay_exponents {}

#[doc = include_str!("../../../book/src/tradeoff.md")]
pub mod tradeoff {}

#[doc = include_str!("../../../book/src/effective-capacity.md")]
pub mod effective_capacity {}

#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/time-units.md")]
pub mod time_units {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
