pub mod constants;
pub mod decoherence;
pub mod ehrenfest;
pub mod ensemble;
pub mod engine;
pub mod error;
pub mod field;
pub mod quadrature;
pub mod scenario;
pub mod special;
pub mod mcwf;
pub mod output;
pub mod spin;
pub mod system;
pub mod tdse;

pub use error::{Error, Result};
