//! Numerical toolkit for expanding interval maps, the Boolean-type
//! transformation and limit theorems of Birkhoff sums of unbounded,
//! oscillating observables such as the Riemann zeta function on vertical
//! lines.

pub mod banach;
pub mod dynamics;
pub mod error;
pub mod observable;
pub mod stats;
pub mod transfer;
pub mod zeta;

pub use error::{Error, Result};
