//! Numerical toolkit for Delaunay-type singular solutions of the constant
//! Q-curvature equation on the round sphere.
//!
//! The crate covers the fourth-order cylindrical ODE and its periodic orbits,
//! the Hamiltonian energy and the radial Pohozaev invariant built from it,
//! conformal and coordinate transforms, and fitting of the refined
//! asymptotic expansion to the tail of a solution.
//!
//! Most of the math is generic over the scalar type through [`Real`]; the
//! aliases at the crate root fix it to `f64`, which is what the CLI and the
//! asymptotic fitter use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod checks;
pub mod coefficients;
pub mod delaunay;
pub mod error;
pub mod geometry;
pub mod ode;
pub mod optimize;
pub mod pohozaev;
pub mod quadrature;
pub mod series;
pub mod state;

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

pub use error::{Error, Result};

/// Scalar requirements shared by every generic routine in the crate.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static {
    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent ordinary finite constants, which never happens for f32/f64.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn int(k: u32) -> Self {
        Self::lit(k as f64)
    }
}

impl<T> Real for T where T: Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static {}

pub type Coefficients = coefficients::OdeCoefficients<f64>;
pub type State = state::CylState<f64>;
pub type Orbit = delaunay::DelaunayOrbit<f64>;
pub type Jet = pohozaev::FieldJet<f64>;
pub type Integrator = ode::IntegratorConfig<f64>;
pub type Shooting = delaunay::ShootingConfig<f64>;
pub type Quadrature = quadrature::SliceQuadrature<f64>;
pub type Trajectory = ode::Trajectory<f64>;

pub use asymptotics::{fit_tail, FitConfig, FitResult, TailSamples};
pub use coefficients::{sphere_area, OdeCoefficients};
pub use delaunay::{shoot_delaunay, v_sph, DelaunayOrbit, ShootingConfig};
pub use ode::{hamiltonian, hamiltonian_drift, integrate, ode_rhs, IntegratorConfig};
pub use pohozaev::{necksize_from_pohozaev, pohozaev_of_necksize, FieldJet};
pub use state::CylState;
