//! Cutting pattern optimization for frame-supported and pneumatic membrane
//! structures.
//!
//! The toolkit iterates between strain-removal flattening of a target surface
//! and equilibrium-shape analysis by total-potential-energy minimization:
//!
//! * [`mesh`] — triangulated surfaces, planar cutting sheets, builtin model
//!   generators and file I/O,
//! * [`materials`] — orthotropic fabric and bilinear ETFE film constitutive
//!   models (all stresses are membrane stress resultants in kN/m),
//! * [`fem`] — corotational constant-strain-triangle kinematics, strain
//!   energy and its analytic gradient,
//! * [`pneumatics`] — enclosed volume, pressure potential and nodal pressure
//!   forces,
//! * [`solver`] — limited-memory quasi-Newton minimization with bound
//!   projection and a finite-difference gradient harness,
//! * [`flatten`] — projection to a plane, unstressed edge lengths and the
//!   weighted edge-length least-squares pattern fit,
//! * [`pattern`] — the outer reduction-stress loop, stress statistics and the
//!   scalar cable demonstration.
//!
//! All numeric code is generic over the scalar type through [`Real`];
//! concrete aliases for the common precisions are exported at the crate root.

pub mod error;
pub mod fem;
pub mod flatten;
pub mod linalg;
pub mod materials;
pub mod mesh;
pub mod pattern;
pub mod pneumatics;
pub mod solver;

pub use error::{Error, Result};

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Scalar type used by all numeric routines: `f32` or `f64`.
pub trait Real:
    num_traits::Float + num_traits::FromPrimitive + Sum + Debug + Display + 'static
{
    /// Shorthand conversion from an `f64` literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal")
    }
}

impl<T> Real for T where
    T: num_traits::Float + num_traits::FromPrimitive + Sum + Debug + Display + 'static
{
}

pub type SurfaceMesh64 = mesh::SurfaceMesh<f64>;
pub type SurfaceMesh32 = mesh::SurfaceMesh<f32>;
pub type PatternSheet64 = mesh::PatternSheet<f64>;
pub type PatternSheet32 = mesh::PatternSheet<f32>;
pub type MaterialModel64 = materials::MaterialModel<f64>;
pub type MaterialModel32 = materials::MaterialModel<f32>;
