//! Equilibrium returns and trading strategies for investors who hedge
//! stochastic exposures, with price impact and quadratic transaction costs.

pub mod affine;
pub mod error;
pub mod frictional;
pub mod frictionless;
pub mod kernel;
pub mod model;
pub mod paths;
pub mod oracle;
pub mod quadrature;
pub mod regimes;
pub mod timefn;

pub use error::{Error, Result};
