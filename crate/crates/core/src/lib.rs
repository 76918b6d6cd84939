pub mod assoc;
pub mod error;
pub mod eval;
pub mod existence;
pub mod jdtvb;
pub mod models;
pub mod scalar;
pub mod sim;
pub mod smoothing;

pub use error::{Error, Result};

/// Double-precision instantiations of the generic model types.
pub type Measurement = models::SlantMeasurement<f64>;
pub type Motion = models::MotionModel<f64>;
pub type Path = models::PropagationPath<f64>;
pub type Sensor = models::SensorGeometry<f64>;
pub type Problem = assoc::AssignmentProblem<f64>;
pub type Marginals = assoc::AssignmentMarginals<f64>;
pub type Meta = existence::MetaModel<f64>;
pub type Existence = existence::ExistencePosterior<f64>;
pub type SmoothedPath = smoothing::PathTrack<f64>;
pub type FusedEstimate = smoothing::FusedTrack<f64>;
