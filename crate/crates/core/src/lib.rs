pub mod assignment;
pub mod blochpbr;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod qcore;
pub mod sampling;
pub mod sic;

pub use error::{Error, Result};
