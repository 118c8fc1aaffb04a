pub mod dpmm;
pub mod error;
pub mod harness;
pub mod jeffreys;
pub mod med;
pub mod parallel;
pub mod posterior;
pub mod quadrature;
pub mod roots;
pub mod special;

pub use error::{EwensError, Result};
