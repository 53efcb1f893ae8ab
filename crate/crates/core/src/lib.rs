//! Representational empowerment over libraries of melodic programs.
//!
//! A small program DSL ([`dsl`]), the library operations that act on it
//! ([`ops`]), exact operation→outcome channels and their capacity
//! ([`empowerment`]), and the task-level executor and meta-level curator
//! built on top. [`envemp`] is the classical grid-world baseline.
//!
//! The crate is `no_std` + `alloc`.
#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod context;
pub mod curator;
pub mod dsl;
pub mod empowerment;
pub mod envemp;
pub mod executor;
pub mod ops;

#[cfg(test)]
pub(crate) mod fixtures;

pub use context::Context;
