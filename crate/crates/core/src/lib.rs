//! Numerical laboratory for the damped wave equation `u_tt - Δu + a(x) u_t = 0`
//! with damping growing like `a0 |x|^α`, posed radially on an exterior domain,
//! together with its diffusion limit `v_t - a(x)^{-1} Δv = 0`.

pub mod config;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod heat;
pub mod plot;
pub mod rates;
pub mod transform;
pub mod wave;
pub mod weight;

pub use error::{Error, Result};
