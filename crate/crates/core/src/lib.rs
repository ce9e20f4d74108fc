pub mod baselines;
pub mod channel;
pub mod effcap;
pub mod error;
pub mod experiment;
pub mod lmgf;
pub mod numerics;
pub mod queuesim;
pub mod tradeoff;

pub use error::{Error, Result};
