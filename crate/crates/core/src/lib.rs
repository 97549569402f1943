pub mod barycenter;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod spectral_measure;
pub mod ot;
pub mod synth;
