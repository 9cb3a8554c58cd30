//! Physics-informed neural networks for porous-media flow and local thermal
//! non-equilibrium heat transfer.

pub mod autodiff;
pub mod collocation;
pub mod config;
pub mod experiment;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod physics;
pub mod trainer;
