//! Optimal investment with a hidden factor: simulation, filtering,
//! Riccati closed forms, BSDE-state Monte Carlo, and strategy/premium
//! analysis for a power-utility investor who only observes prices.
//!
//! The market is a single risky asset whose drift is driven by an
//! unobserved scalar factor — an Ornstein–Uhlenbeck process
//! (`dS/S = (μ + Y)dt + σ dW̃`) or a square-root (CIR) process
//! (`dS/S = c√Y dt + σ dW̃`).  The investor's problem factorizes through
//! a dual state `ξ(t)` and value coefficients `A(t)`, `H(t)` solving a
//! scalar Riccati equation; the crate provides:
//!
//! * [`model`] — model structs, power utility, integrability checks;
//! * [`sim`] — exact-OU / full-truncation-CIR market simulation with
//!   reproducible, role-separated random streams ([`rng`]);
//! * [`filter`] — the Kalman filter (linear case) and a discretized
//!   Bayes filter on a grid (general case);
//! * [`riccati`] — closed-form `A`, `H` coefficients, RK4
//!   cross-integration, stability margins, and nirvana blow-up times;
//! * [`bsde`] — nested Monte Carlo for `ξ(t)`, linear closed forms, the
//!   BSDE drift `β`, driver `F`, and the classical pair `(χ, ψ)`;
//! * [`strategy`] — optimal strategies, value functions, conjugacy and
//!   martingale verification, and the information premium.
//!
//! Everything numeric is deterministic given a seed: random streams are
//! namespaced by `(seed, path index, role)` and parallel reductions run
//! in fixed index order, so results are byte-identical across worker
//! counts.

#![forbid(unsafe_code)]
#![warn(missing_docs)]
// Validation guards are written `!(x > 0.0)` rather than `x <= 0.0` on
// purpose: the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod book;
pub mod bsde;
pub mod error;
pub mod filter;
pub mod model;
pub mod riccati;
pub mod rng;
pub mod sim;
pub mod strategy;

pub use error::{Error, Result};
pub use model::{CirModel, LinearOuModel, PowerUtility, ScalarModel};
pub use sim::{PathBundle, TimeGrid};
