//! Averaging calculus for vector fields with periodic flow: circle-action
//! averages of tensor fields, global solutions of homological equations for
//! functions, multivector fields and differential forms, first-order
//! normalization of perturbed fields, and slow-fast Hamiltonian scenarios.

pub mod averaging;
pub mod chart;
pub mod components;
pub mod error;
pub mod exterior;
pub mod field;
pub mod flow;
pub mod homological;
pub mod multiindex;
pub mod normal_form;
pub mod probe;
pub mod quadrature;
pub mod scenario;
pub mod slow_fast;

pub use chart::{CoordChart, Point};
pub use components::{ComponentJacobian, Components};
pub use error::{Error, Result};
pub use field::{TensorField, Valence};
pub use flow::{IntegratorConfig, OrbitSample, OrbitTier, PeriodicFlow, PeriodicFlowConfig};
