//! Differentiable zero-dimensional combustion reactor with neural heat-source
//! and Arrhenius closures.

pub mod autodiff;
pub mod baselines;
pub mod datagen;
pub mod error;
pub mod kinetics;
pub mod neural;
pub mod odeint;
pub mod optim;
pub mod pnode;
pub mod reactor;
pub mod real;
pub mod scenario;
pub mod thermo;

pub use error::{Error, Result};
pub use real::Real;
