//! Density-valued decoding waves over binary memoryless symmetric
//! channels, density file formats and the `wavefront` command line.

pub mod bms;
pub mod cli;
pub mod density;
mod fft;
pub mod io;

pub use density::{Algebra, Density, GDensity, LlrGrid, QuantizedDensity, SignedDensity};
