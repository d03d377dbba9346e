//! Reconstruction: scaled ADMM with CG inner solves and a Haar-shrinkage TV prior.

pub mod admm;
pub mod cg;
pub mod tv;

pub use admm::{admm_reconstruct, reconstruct_no_mask_reference, AdmmHistory, IterationRecord, SolverConfig, SolverPreset};
pub use cg::{cg_solve, CgStats};
pub use tv::{haar_shrink_1d, tv_prox, TvDims, TvWeights};
