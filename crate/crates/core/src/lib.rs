//! Stability analysis of switched nonlinear systems that share a common weak
//! Lyapunov function.
//!
//! The crate computes tangency and invariance sets from iterated Lie derivatives,
//! their conic and linear approximations at the origin, checks the geometric
//! stability conditions built on them, and cross-checks verdicts by simulating
//! the switched dynamics under several classes of switching signals.

pub mod corpus;
pub mod expr;
pub mod geometry;
pub mod linear;
pub mod model;
pub mod planar;
pub mod report;
pub mod sampling;
pub mod signals;
pub mod sim;

pub use expr::{Expr, ExprError, HomogeneousForm, Poly, Rational, VectorFieldExpr};
pub use geometry::{ConditionVerdict, HomogeneousCone, Holds, LinearSubspace, SetOracle};
pub use model::{Assumptions, Mode, SwitchedSystem};
pub use linear::{CenterManifoldApprox, SpectralSplit};
pub use signals::{SignalReport, SwitchingSignal};
pub use sim::{OmegaEstimate, Trajectory};
pub use report::{analyze, AnalysisParams, AnalysisReport};
