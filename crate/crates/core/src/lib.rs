#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod algebra;
pub mod dual;
pub mod dynamic_map;
pub mod error;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod schrodinger;
pub mod static_map;

pub use error::{Error, Result};
