//! Linear p-stable sketches for estimating l_p^p clustering costs in small space.

pub mod countmin;
pub mod data;
pub mod distributed;
pub mod error;
pub mod fixed;
pub mod median;
pub mod medoid;
pub mod oracle;
pub mod partition;
pub mod precision;
pub mod rng;
pub mod stable_sketch;
pub mod stream;
pub mod synth;
pub mod wire;

pub use error::{Error, Result};
