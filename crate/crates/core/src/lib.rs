//! Multistage stochastic linear programming toolkit.
//!
//! Solves stagewise-independent MSLPs from both sides at once: standard
//! (primal) SDDP builds lower-bounding cuts and statistical upper bounds,
//! while Dual SDDP runs the same cutting-plane machinery on the dynamic
//! programming equations of the *dual* problem, producing a deterministic,
//! nonincreasing sequence of upper bounds on the primal optimum. Because the
//! dual may lack relatively complete recourse even when the primal has it,
//! two Dual SDDP variants are provided: slack penalization and feasibility
//! cuts. Optimal dual trajectories feed derivative estimates of the optimal
//! value with respect to model parameters.
//!
//! Module map:
//! - [`lp`]: bounded-variable revised simplex returning exact primal/dual pairs;
//! - [`model`]: instance data model, deterministic equivalent, dual boxes;
//! - [`cuts`]: shared polyhedral models of stage value functions;
//! - [`primal`]: primal SDDP and multiplier extraction;
//! - [`dual`]: Dual SDDP with penalizations, feasibility cuts, the
//!   all-parameters-random extension, and interstage-dependent costs;
//! - [`oracle`]: grid dynamic programming for scalar dual states;
//! - [`sensitivity`]: value-function derivatives and demand-process moments;
//! - [`instances`]: inventory/hydro generators and instance (de)serialization;
//! - [`trace`]: bound traces and their CSV formats.

pub mod cuts;
pub mod dual;
pub mod instances;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod primal;
pub mod sensitivity;
pub mod sim;
pub mod trace;

pub use cuts::{Cut, CutPool, Orientation, PolicyApprox};
pub use lp::{solve_lp, LpBuilder, LpError, LpProblem, LpSolution, LpStatus, RowSense, Sense};
pub use model::{DualBox, MslpInstance, StageRealization};
pub use trace::{BoundsTrace, DualTrace};
