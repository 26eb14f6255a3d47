//! Support-function calculus for convex hypersurfaces, an anisotropic
//! shrinking-flow engine with monotone-functional diagnostics, and an L_p
//! Minkowski solver built on the flow.

pub mod body;
pub mod config;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod io;
pub mod minkowski;
pub mod sphere;
pub mod verify;

pub use body::{CurvatureData, RadialField, ShapeKind, SupportField};
pub use error::{BodyError, FlowError, GridError, ParamsError, SolverError};
pub use flow::{FlowConfig, FlowState, Termination, Trajectory};
pub use functionals::{FlowParams, Regime};
pub use minkowski::{LpProblem, SolveReport};
pub use sphere::{sphere_area, SphereGrid, SymMatrixField, VectorField};
