//! Scaled torus principal component analysis (ST-PCA).
//!
//! Dimensionality reduction for multivariate angular data on the d-torus.
//! The pipeline embeds the sample onto a d-sphere of optimized radius by
//! minimizing the discrepancy between pairwise geodesic distances (spherical
//! multidimensional scaling), fits principal nested spheres to the embedded
//! configuration to obtain scores and modes of variation, and inverts the
//! embedding to produce a principal curve and a variance decomposition on the
//! torus.

pub mod analysis;
pub mod cli;
pub mod embedding;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod model;
pub mod optim;
pub mod pns;
pub mod radius;
pub mod smds;
pub mod torus_map;

pub use error::{Result, StpcaError};
