//! Numerical core for lattice experiments on random conductance models with
//! critical long-range jumps (pair kernel w_{x,y} |x−y|^{−d−2}).
//!
//! Everything here is deterministic by construction: conductances are pure
//! functions of an environment spec, bulk reductions run over fixed chunk
//! grids in fixed order, and transcendentals route through `libm` so std and
//! no_std builds agree bitwise.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod corrector;
pub mod env;
pub mod fft;
pub mod lattice;
pub mod math;
pub mod op;
pub mod rng;
pub mod solver;
pub mod par;
pub mod poincare;
pub mod reference;
pub mod resolvent;
pub mod shells;
pub mod sum;
pub mod walk;
