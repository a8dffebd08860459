//! Oracles shared by the core integration tests and the acceptance target.
#![allow(dead_code)]

pub mod geweke;
pub mod oracles;
pub mod witness;
