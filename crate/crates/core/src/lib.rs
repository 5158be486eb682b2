pub mod conv;
pub mod error;
pub mod eval;
pub mod frangi;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod maskgen;
pub mod morphology;
pub mod optimize;
pub mod render;
pub mod rng;
pub mod skeleton;

pub use error::{Error, Result};
pub use grid::{BinaryMask, Grid, Image, ProbMap};
pub use rng::RngStream;
