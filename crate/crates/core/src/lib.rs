//! FD-MIMO system-level modelling: 2D antenna arrays, TXRU virtualization,
//! a 3D parametric channel, CSI feedback schemes, multi-user precoding,
//! proportional-fair scheduling and a multi-cell FTP traffic simulator.

pub mod array;
pub mod channel;
pub mod feedback;
pub mod linalg;
pub mod precoding;
pub mod rng;
pub mod scalar;
pub mod scheduler;
pub mod sim;
pub mod txru;

pub use scalar::Real;

pub type C64 = num_complex::Complex<f64>;
pub type C32 = num_complex::Complex<f32>;
pub type CMatrix = linalg::CMat<f64>;
pub type CMatrix32 = linalg::CMat<f32>;
pub type ArrayGeometry64 = array::ArrayGeometry<f64>;
pub type ArrayGeometry32 = array::ArrayGeometry<f32>;
pub type Codebook64 = feedback::Codebook<f64>;
pub type Codebook32 = feedback::Codebook<f32>;
