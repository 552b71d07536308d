// Indexed loops and NaN-rejecting negated comparisons are deliberate in
// this numerical code.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Data-driven fMRI parcellation.
//!
//! The crate decomposes per-subject time series into independent
//! components, matches task-related components across subjects, samples
//! seed voxels from the component maps, extracts PLS latent time courses
//! between the seed signals and the principal components of the data, and
//! parcellates each subject by geodesic spectral clustering of the
//! per-voxel latent covariance features. Evaluation statistics (GLM and
//! PLS t-maps, intra-parcel variance, adjusted Rand index) and a synthetic
//! cohort generator round out the toolkit.
//!
//! All numerical code is generic over the scalar type ([`Scalar`], `f32`
//! or `f64`); the pipeline, CLI and file formats are `f64` (see the
//! aliases below).

pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod grid;
pub mod ica;
pub mod icmatch;
pub mod io;
pub mod linalg;
pub mod nifti;
pub mod parcellate;
pub mod pipeline;
pub mod pls;
pub mod rng;
pub mod scalar;
pub mod seeds;
pub mod synth;

pub use error::{Error, ErrorCategory, Result};
pub use scalar::Scalar;

/// Concrete `f64` aliases used by the pipeline and file formats.
pub type Mat64 = linalg::Mat<f64>;
pub type BoldDataset64 = dataset::BoldDataset<f64>;
pub type DesignMatrix64 = dataset::DesignMatrix<f64>;
pub type ICDecomposition64 = ica::ICDecomposition<f64>;
pub type FeatureField64 = pls::FeatureField<f64>;
pub type Parcellation64 = parcellate::Parcellation;

/// `f32` aliases for callers that trade precision for memory.
pub type Mat32 = linalg::Mat<f32>;
pub type BoldDataset32 = dataset::BoldDataset<f32>;
