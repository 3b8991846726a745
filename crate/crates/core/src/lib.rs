//! Lagrangian vortex-particle laboratory for axisymmetric incompressible Euler
//! flows without swirl.
//!
//! The library is generic over the floating-point type through [`Real`]; the
//! aliases below fix it to `f64`, which is what the CLI uses.

pub mod biotsavart;
pub mod error;
pub mod expcli;
pub mod fields;
pub mod initdata;
pub mod keylemma;
pub mod norms;
pub mod scalar;
pub mod special;
pub mod transport;

pub use error::{LabError, Result};
pub use scalar::Real;

pub type Point = fields::HalfPlanePoint<f64>;
pub type Particle = fields::VortexParticle<f64>;
pub type System = fields::ParticleSystem<f64>;
pub type Grid = fields::GridSpec<f64>;
pub type Field = fields::GriddedField<f64>;
pub type Params = initdata::BubbleParams<f64>;
pub type Kernel = biotsavart::KernelConfig<f64>;
