//! Flexibility valuation for a thermostatically controlled load.
//!
//! A supermarket freezer can monetise its thermal inertia in two ways: by
//! selling manual frequency restoration reserve (mFRR) through a balance
//! responsible party, or by shifting consumption towards cheap day-ahead
//! hours on its own. This crate models both and measures which pays more:
//!
//! - [`thermal`]: the second-order freezer temperature model,
//! - [`prices`]: market price ingestion and the freezer's market spec,
//! - [`scenario`]: in-sample price scenario generation,
//! - [`milp`]: the two-stage stochastic reserve-bidding MILP,
//! - [`loadshift`]: the deterministic load-shifting reduction,
//! - [`admm`]: consensus scenario decomposition for large scenario sets,
//! - [`backtest`]: day-by-day out-of-sample evaluation of five models.

pub mod admm;
pub mod backtest;
pub mod error;
pub mod loadshift;
pub mod milp;
pub mod prices;
pub mod scenario;
pub mod thermal;

pub use error::{Error, Result, SolveError};
