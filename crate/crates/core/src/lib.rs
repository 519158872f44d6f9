//! An automated theorem prover for untyped set theory in first-order logic.
//!
//! The crate is organized around a small trusted kernel ([`kernel`]) and an
//! untrusted automation layer built on top of it: a congruence-closure
//! rewrite table ([`congruence`]), property and well-formedness tables
//! ([`tables`]), compiled proof steps ([`steps`]), a best-first saturation
//! engine ([`state`]), certified algebraic normalizers ([`wfconv`]), a
//! declarative proof-script language ([`script`]) and a theory-file loader
//! ([`theory`]).

pub mod congruence;
pub mod derived;
pub mod kernel;
pub mod script;
pub mod state;
pub mod steps;
pub mod tables;
pub mod theory;
pub mod wfconv;

pub use kernel::{Signature, SimpleType, Term, Theorem};
