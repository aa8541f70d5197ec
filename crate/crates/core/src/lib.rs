pub mod channel;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod information;
pub mod linalg;
pub mod protocol;
pub mod report;
pub mod selfcheck;

pub use error::{Error, Result};
