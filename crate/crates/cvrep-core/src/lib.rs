//! Numerical engine for a first-generation continuous-variable quantum
//! repeater: two-mode squeezed sources, pure-loss fibre, quantum-scissor
//! noiseless amplification, post-selected dual-homodyne entanglement
//! swapping and Gaussian key-rate / entanglement figures of merit.
//!
//! The crate is `no_std` and only needs `alloc`. States live in a dense
//! truncated Fock representation over explicitly labelled modes.

#![no_std]
// once std is in the build graph (dev-dependencies) its inherent float
// methods shadow the libm-backed `Float` trait imports
#![allow(unused_imports)]

extern crate alloc;

pub mod channel;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod quadrature;
pub mod rates;
pub mod scissor;
pub mod swap;

pub use error::{Error, Result};
pub use num_complex::Complex64;
