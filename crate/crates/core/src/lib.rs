//! Analysis of period-one stationary solutions of the classical
//! perturbation-based extremum seeking control loop.
//!
//! The pieces build on each other: [`plant`] solves equilibria and linearizes,
//! [`freq`] evaluates frequency responses, [`stationarity`] finds operating
//! points that satisfy the phase condition, [`zeros`] tracks transmission zeros,
//! [`continuation`] traces solution branches over the perturbation frequency and
//! [`timesim`] simulates the full loop and computes periodic orbits.

pub mod bench;
pub mod continuation;
pub mod error;
pub mod export;
pub mod freq;
mod linalg;
pub mod plant;
pub mod stationarity;
pub mod timesim;
pub mod zeros;

pub use error::{EscError, Result};
