//! Repeated first-price auctions that stay revenue-robust against
//! forward-looking and learning buyers.

pub mod agents;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod mechanism;
pub mod money;
pub mod oracle;
pub mod simulator;
pub mod valuation;

pub use error::{Error, Result};
pub use money::{Fraction, Money};
