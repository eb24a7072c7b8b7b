//! Doubly-sparse structure norms and the tools around them: dual norms by
//! 1-D K-means, proximal maps, regularized least-squares solvers,
//! relative-diameter computations and statistical bound calculators.

pub mod bench;
pub mod combin;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kdnorm;
pub mod linalg;
pub mod polytope;
pub mod proxops;
pub mod solvers;
pub mod statbounds;
mod qcqp;
pub mod vecnorms;

pub use error::{Error, Result};
pub use vecnorms::NormDescriptor;
