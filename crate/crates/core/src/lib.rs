//! Simulation and reconstruction toolkit for diffuser-based lensless
//! polarization cameras.
//!
//! A striped polarizer mask sits in front of the sensor, so each sensor pixel
//! sees the diffuser-blurred scene through one of four linear polarizers. The
//! crate provides the forward model of that camera, an ADMM reconstruction of
//! the four polarization sub-images, mask perturbation models for robustness
//! studies, Stokes/quality metrics, and a scalar-diffraction model of the
//! mask-to-sensor gap.

pub mod diffraction;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod masks;
pub mod metrics;
pub mod optics;
pub mod scene;
pub mod solver;
pub mod stokes;
pub mod tensor;

pub use error::{Error, Result};
