//! Desk-scale laboratory for random-walk asymptotics on finitely generated
//! groups.
//!
//! The crate computes, estimates and property-tests the quantitative objects
//! attached to a random walk `(G, mu)`:
//!
//! - group-element arithmetic, word lengths and volume growth for free,
//!   free-abelian, cyclic and lamplighter families ([`groups`]);
//! - sparse convolution, Shannon entropy, norms, moments and Monte Carlo
//!   path sampling ([`measures`]);
//! - weights `omega` on `G`, the derived family `omega^(1/p)` and weighted
//!   norms ([`weights`]);
//! - spectral-radius estimators in weighted `l1` algebras and in algebras of
//!   p-pseudofunctions ([`spectra`]);
//! - scalar asymptotics: Avez entropy, Lyapunov exponents, weighted
//!   entropies and convolution entropy ([`estimators`]);
//! - the free-group boundary with exact cylinder measures, Radon-Nikodym
//!   cocycles and Harish-Chandra pairings ([`boundary`]);
//! - the de la Vallee Poussin majorant construction ([`dlvp`]).
//!
//! All numeric output is in nats. Exact boundary quantities are computed in
//! arbitrary-precision rational arithmetic; everything else is IEEE-754
//! `f64` with compensated summation where sums are long.

pub mod boundary;
pub mod dlvp;
pub mod error;
pub mod estimators;
pub mod groups;
pub mod measures;
pub mod seq;
pub mod spectra;
pub mod weights;

pub use error::{Error, Result};
