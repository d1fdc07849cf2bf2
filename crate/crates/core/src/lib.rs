//! Approximate Nash-bargaining solutions for matching markets.
//!
//! Markets are described by [`instance::MarketInstance`]. Two solver families
//! are provided: multiplicative weights ([`mwu`]) for one-sided markets with
//! endowments, and conditional gradient ([`cgd`]) over matching and flow
//! polytopes for every kind. [`certify`] checks solutions after the fact and
//! [`rounding`] turns fractional bipartite allocations into lotteries over
//! integral matchings.

pub mod certify;
pub mod cgd;
pub mod error;
pub mod instance;
pub mod mwu;
pub mod oracles;
pub mod reforacle;
pub mod rounding;

pub use error::{Error, Result};
pub use instance::{MarketInstance, ModelKind, ScalingInfo, Segment};
