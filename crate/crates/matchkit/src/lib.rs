//! Finite two-sided matching markets with multidimensional types.
//!
//! The crate models markets as discrete measures over attribute vectors and
//! provides: exact aggregate-output maximization (transportation solving
//! with an enumeration oracle), sign classification of output functions and
//! sorting-pattern checks on matchings, dominance in the transfer-cone
//! order, logit matching equilibria via iterative proportional fitting,
//! rank-association statistics, and maximum-likelihood estimation of
//! quadratic match-surplus coefficients from couple data.

pub mod association;
pub mod error;
pub mod estimation;
pub mod logit;
pub mod market;
pub mod modularity;
pub mod order;
pub mod planner;
pub mod sorting;

pub use error::{Error, ErrorKind, Result};
