pub mod analysis;
pub mod channels;
pub mod cli;
pub mod decay;
pub mod error;
pub mod expr;
pub mod fft;
pub mod frames;
pub mod geometry;
pub mod io;
pub mod phase_space;
pub mod quadrature;
pub mod rng;
pub mod superop;
pub mod weights;
pub mod weyl;
pub mod window;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
