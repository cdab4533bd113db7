pub mod codec;
pub mod container;
pub mod decode_api;
pub mod detmath;
pub mod entropy;
pub mod eval;
pub mod error;
pub mod frame;
pub mod intercode;
pub mod io;
pub mod latent;
pub mod partition;
pub mod registry;
pub mod semantics;
pub mod synth;
pub mod transform;

pub use error::{Error, ErrorClass, Result};
