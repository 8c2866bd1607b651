//! Numerical toolkit for selling a single item to one buyer when incentive
//! compatibility only has to hold up to an additive slack `eps`.
//!
//! The crate is organised bottom-up:
//!
//! * [`numeric`]: quadrature, scalar root finding and regression helpers.
//! * [`distributions`]: value distributions, revenue curves, envelope checks.
//! * [`mechanism`]: the mechanism data model, revenue and verification.
//! * [`deterministic`]: hard/soft floor mechanisms.
//! * [`gamma`] and [`delayed`]: the randomized delayed mechanism.
//! * [`dual`]: certified revenue upper bounds from a path relaxation.
//! * [`lp`] and [`simplex`]: brute-force discretized optimum.
//! * [`harness`]: scaling sweeps and CSV/JSON emission.

pub mod delayed;
pub mod deterministic;
pub mod distributions;
pub mod dual;
pub mod error;
pub mod gamma;
pub mod harness;
pub mod lp;
pub mod mechanism;
pub mod numeric;
pub mod simplex;

pub use distributions::{DistConfig, Envelope, ValueDistribution};
pub use error::{Error, Result};
pub use mechanism::{Mechanism, MechanismSpec, ReportingMap, VerificationReport};
