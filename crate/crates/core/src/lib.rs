//! Certified convergence rates and stationary-distribution error bounds for
//! countable-state Markov kernels approximated by finite truncations.
//!
//! The library works with a Markov kernel `P` on the state space `{0, 1, 2, ...}`
//! and a weight sequence `V` with `V(0) = 1`, increasing and unbounded. All
//! operator norms are taken on the weighted space of functions `f` with
//! `sup_j |f(j)| / V(j) < ∞`. From a drift inequality `PV ≤ δV + L·1` the
//! pipeline derives, for the last-column-augmented `(k+1)×(k+1)` truncation
//! `P_k`:
//!
//! * a certified geometric rate `r_k` and constant `c_k` such that
//!   `‖Pⁿ − π(·)1‖ ≤ c_k · r_kⁿ⁺¹` for all `n`,
//! * total-variation bounds on `‖π̂_k − π‖` between the truncated and the
//!   true stationary distribution, both directly in `k` and as a function of
//!   the truncation level for a target accuracy,
//!
//! with every constant explicit and reported with its provenance.
//!
//! Module map:
//!
//! * [`kernels`] — infinite kernels with banded homogeneous tails, weight
//!   sequences, drift verification.
//! * [`models`] — the bounded-increment random-walk family and its analytic
//!   drift parameters.
//! * [`truncation`] — last-column-augmented truncations and the weak-norm
//!   distance `‖P̂_k − P‖` (bound and exact value).
//! * [`spectral`] — stationary vectors (GTH), second-eigenvalue moduli, and
//!   the ergodicity constants `(s, C_k)` of the truncated chain.
//! * [`bounds`] — the perturbation constants (`n₁`, `n₂`, `H`, `ε₁`, `c_k`)
//!   and every certified bound, with provenance.
//! * [`certify`] — the end-to-end certification loop and the brute-force
//!   oracle used to audit every emitted bound.
//! * [`config`] — JSON model/weight configuration shared with the CLI.

pub mod bounds;
pub mod certify;
pub mod config;
pub mod kernels;
pub mod models;
pub mod spectral;
pub mod truncation;

pub use bounds::{BoundReport, CoreConstants, KlConstants};
pub use certify::{CertificationRun, OracleReference};
pub use kernels::{DiscreteKernel, DriftCertificate, WeightSequence};
pub use models::{GammaSolution, RandomWalkSpec};
pub use spectral::TruncationAnalysis;
pub use truncation::FiniteTruncation;

/// Row-sum tolerance for stochastic matrices and kernel rows.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Additive slack allowed when checking the drift inequality row by row.
pub const DRIFT_SLACK: f64 = 1e-10;

/// Smallest admissible drift offset `L`; the bound formulas require `L > 0`.
pub const MIN_DRIFT_OFFSET: f64 = 1e-12;
