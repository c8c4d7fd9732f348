//! Multi-agent consensus under unknown-but-bounded (UBB) measurement noise.
//!
//! A set of `n` first-order agents integrates `ẋᵢ = uᵢ`, where each control
//! `uᵢ` is computed from disturbed measurements of the neighbors' states,
//! `yᵢⱼ = xⱼ + dᵢⱼ` with `|dᵢⱼ| ≤ ξ`. Nothing is assumed about the
//! disturbance beyond the bound `ξ`: no statistics, no structure. Under that
//! model exact consensus is generally unreachable, and the interesting
//! questions become *how close* to consensus the network can get, and how
//! that distance depends on the disturbance, the topology, and the dwell
//! time between topology switches.
//!
//! The crate provides:
//!
//! * [`topology`] — agent graphs, edgeset families, and piecewise-constant
//!   switching signals with dwell-time semantics;
//! * [`disturbance`] — bounded disturbance realizations (constant,
//!   piecewise-linear, seeded-random) and box-occupancy measures `μ`;
//! * [`protocol`] — the lazy estimation rule, which picks neighbor-state
//!   estimates inside their uncertainty intervals so as to minimize the
//!   control magnitude, yielding a deadband feedback law;
//! * [`simulator`] — fixed-step RK4 integration of the switched system with
//!   steps aligned to switching times, plus the closed-form two-agent
//!   reference system used for envelope bounds;
//! * [`polyhedra`] — the equilibrium polyhedra `P(d,E)`, `P(Q,E)`, `P(D,E)`,
//!   membership and distance queries, and the tube-radius bounds `ε̄` and
//!   `L(Q,E)` computed by an embedded dense simplex solver;
//! * [`analysis`] — trajectory diagnostics (edge Lyapunov function `V`,
//!   spread `𝒱`), consensus-tube reports, envelope bounds, and empirical
//!   dwell-time estimates for switching networks;
//! * [`scenario`] / [`cli`] — a strict TOML scenario format and the `ubbc`
//!   command-line front end with CSV trajectory export.
//!
//! Agent identifiers are 1-based throughout (both in the API and in
//! serialized scenario files); edgeset indices are 0-based.
//!
//! ```
//! use ubb_consensus::prelude::*;
//!
//! // Three agents in a chain, constant zero disturbance, bound ξ = 1.
//! let topology = Topology::chain(3);
//! let signal = SwitchingSignal::fixed(0, 10.0);
//! let disturbance = DisturbanceRealization::zero(3, 1.0);
//! let scenario = Scenario::new(
//!     topology,
//!     signal,
//!     disturbance,
//!     vec![4.0, 0.0, 2.0],
//!     ProtocolMode::Lazy,
//!     1e-3,
//!     10.0,
//! )
//! .unwrap();
//!
//! let trajectory = integrate(&scenario).unwrap();
//! let report = consensus_report(&trajectory, 2.0, scenario.topology(), 1.0);
//! assert!(report.achieved);
//! ```

pub mod analysis;
pub mod cli;
pub mod disturbance;
pub mod matrix;
pub mod polyhedra;
pub mod protocol;
pub mod scenario;
pub mod simulator;
pub mod topology;

use std::fmt;

/// Errors produced by scenario construction, simulation, and the polyhedral
/// computations.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument is out of range or inconsistent.
    InvalidArgument(String),
    /// A generator could not realize the requested object (e.g. a
    /// box-recurrent disturbance whose dwell requirements do not fit the
    /// window).
    Construction(String),
    /// An operation's precondition does not hold for the given inputs.
    Precondition(String),
    /// The integrator produced a non-finite state.
    Integration { t: f64, message: String },
    /// A scenario file could not be parsed.
    Parse(String),
    /// An internal consistency check failed; indicates a bug.
    Internal(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::Construction(m) => write!(f, "construction failed: {m}"),
            Error::Precondition(m) => write!(f, "precondition violated: {m}"),
            Error::Integration { t, message } => {
                write!(f, "integration failed at t = {t}: {message}")
            }
            Error::Parse(m) => write!(f, "parse error: {m}"),
            Error::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

/// One-stop imports for the common simulation workflow.
pub mod prelude {
    pub use crate::analysis::{
        consensus_report, envelope_bounds, lyapunov, spread, switched_tube_check,
    };
    pub use crate::disturbance::{DisturbanceBox, DisturbanceBound, DisturbanceRealization};
    pub use crate::matrix::PairMatrix;
    pub use crate::polyhedra::{epsilon_bar, tube_radius, PolyhedronSpec};
    pub use crate::protocol::ProtocolMode;
    pub use crate::simulator::{integrate, two_agent_reference, Scenario, Trajectory};
    pub use crate::topology::{SwitchingSignal, Topology};
    pub use crate::{Error, Result};
}
