//! Online topic modeling over a document stream.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod gaussot;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod sbetm;
pub mod special;
pub mod trace;
pub mod train;

pub use error::{Error, Result};
