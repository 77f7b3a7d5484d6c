//! Optimal experimental design for multinomial-logit (MNL) choice models over
//! combinatorial assortment spaces, and a fixed-confidence best-assortment
//! identification loop built on top of it.
//!
//! The crate is organized around the pipeline:
//!
//! 1. [`mnl`] — choice probabilities, Fisher information, lifted second
//!    moments, likelihood derivatives, and the `kappa` nonlinearity constant.
//! 2. [`lmo`] / [`milp`] / [`simplex`] — linear maximization oracles over the
//!    assortment family: exhaustive enumeration, an exact 0-1 MILP reduction
//!    solved by an in-crate branch-and-bound with certified gaps, and a
//!    polynomial-time ratio-of-sums oracle for the lifted objective.
//! 3. [`design`] — Frank-Wolfe G-optimal design loops (exact, certified
//!    approximate, lifted) with design diagnostics.
//! 4. [`estimator`] / [`assortment`] / [`bsi`] / [`sim`] — regularized MLE,
//!    revenue-optimal assortment selection, the identification algorithm, and
//!    a bit-reproducible simulation environment.
//!
//! [`oracle`] holds independent reference implementations (brute-force
//! enumeration, finite differences, a naive tableau LP solver) used by the
//! verification suite in [`check`]; they intentionally share no code with the
//! implementations they validate.

pub mod assortment;
pub mod bench;
pub mod bsi;
pub mod check;
pub mod design;
pub mod error;
pub mod estimator;
pub mod lmo;
pub mod milp;
pub mod mnl;
pub mod mps;
pub mod oracle;
pub mod rng;
pub mod sim;
pub mod simplex;

pub use error::{Error, Result};
pub use mnl::{Assortment, ChoiceProbs, Instance};
