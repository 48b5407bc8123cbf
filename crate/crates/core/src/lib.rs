//! Current fluctuations of independent lattice random walks.
//!
//! * [`kernel`]: jump laws, their moments and exact displacement sampling.
//! * [`test_functions`]: a closed family of test functions with exact
//!   derivatives, scaling and heat smoothing.
//! * [`analytic`]: covariance of the Gaussian limit and exact sampling of
//!   its finite-dimensional distributions.
//! * [`simulator`]: the scaled current of a finite walker system.
//! * [`stats`]: ensembles, standard errors, covariance comparison and
//!   normality tests.
//!
//! The numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`.

pub mod analytic;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod quadrature;
pub mod real;
pub mod rng;
pub mod simulator;
pub mod stats;
pub mod test_functions;

pub use analytic::{
    box_i, covariance_terms, gaussian_density, increment_variance, limit_covariance, pair_integral, q_forms,
    sample_limit_fdd, sigma1, sigma2, LimitSampler, LimitSpec, SpaceTimePoint,
};
pub use error::{Error, Result};
pub use kernel::JumpKernel;
pub use linalg::Matrix;
pub use real::Real;
pub use rng::RngStream;
pub use simulator::{
    integer_part, moments_of_law, run_replica, truncation_radius, CurrentPath, InitialLaw, Observable,
    SimulationPlan,
};
pub use test_functions::{Factor, HeatSmoothed, TestFunction};

pub type Kernel = JumpKernel<f64>;
pub type Function = TestFunction<f64>;
pub type Spec = LimitSpec<f64>;
pub type Point = SpaceTimePoint<f64>;
pub type Plan = SimulationPlan<f64>;
pub type Path = CurrentPath<f64>;
pub type Mat = Matrix<f64>;
