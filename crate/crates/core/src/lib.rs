//! Netlist-to-Hamiltonian engine for nonreciprocal superconducting circuits.
//!
//! The crate has two halves.  The exact half parses a circuit netlist,
//! builds its Kirchhoff/multiport constraint system over the rationals,
//! pulls the branch two-form back to the constraint manifold, eliminates
//! zero modes and returns a canonical Hamiltonian with compact/extended
//! tags.  The numerical half solves the transmission-line boundary
//! eigenproblem, computes convergent coupling parameters, and discretizes
//! dissipative (non)reciprocal environments into oscillator baths.

// Validation code writes `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abg;
pub mod bath;
pub mod circulator;
pub mod couplings;
pub mod dae;
pub mod dynamics;
pub mod error;
pub mod finite_line;
pub mod graph;
pub mod hamiltonian;
pub mod netlist;
pub mod numerics;
pub mod rational;
pub mod report;
pub mod symplectic;
pub mod verify;

pub use error::{Error, Result};
