//! Finite-key secret-key-rate analysis for no-phase-post-selection twin-field
//! QKD (NPP-TFQKD).
//!
//! The crate models the full estimation pipeline of a 4-intensity decoy-state
//! NPP-TFQKD link:
//!
//! * [`channel`] — expected and Monte-Carlo sampled gain statistics of the
//!   untrusted measurement station,
//! * [`statistics`] — Chernoff/Azuma confidence intervals and the composable
//!   failure-probability budget,
//! * [`decoy`] — analytical 4-intensity bounds on the weighted yields
//!   `q_nm`, together with a linear-programming oracle,
//! * [`fluctuation`] — interval bounds on the Poisson coefficients under
//!   bounded per-pulse intensity fluctuation, and the propagation of those
//!   intervals through the decoy bounds,
//! * [`keyrate`] — the collective-attack key rate, the coherent-attack lift,
//!   and the repeaterless (PLOB) benchmark,
//! * [`optimizer`] — particle-swarm search over the ten free protocol
//!   parameters,
//! * [`scenario`] — config-driven sweeps and CSV/JSON emission backing the
//!   `tfqkd` command-line tool.
//!
//! All estimation routines are pure functions; Monte-Carlo helpers take an
//! explicit seed and are bit-reproducible regardless of thread count.

pub mod channel;
pub mod decoy;
pub mod error;
pub mod fluctuation;
pub mod interval;
pub mod keyrate;
pub mod optimizer;
pub mod scenario;
pub mod simplex;
pub mod statistics;

pub use error::{Error, Result};
pub use interval::Interval;
