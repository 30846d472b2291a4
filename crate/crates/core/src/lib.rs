//! Split/merge subcluster sampling for Dirichlet process Gaussian mixtures.
//!
//! The sampler keeps two subclusters inside every cluster and proposes
//! splitting along them. How those subclusters are initialized is pluggable:
//! uniformly at random, 2-means, or a set-transformer model loaded from a
//! weight file ([`SplitInitializer`]).
//!
//! ```no_run
//! use subsplit::{fit, Dataset, NiwParams, SamplerConfig, SplitInitializer};
//!
//! let data = subsplit::data::read_points_csv("points.csv".as_ref())?;
//! let prior = NiwParams::weak_from_data(&data, None, None, 1.0)?;
//! let config = SamplerConfig { strategy: SplitInitializer::kmeans(), ..Default::default() };
//! let (state, trace) = fit(&data, 1.0, prior, config)?;
//! println!("K = {}, LP = {}", state.k(), trace.rows.last().unwrap().log_posterior);
//! # Ok::<(), subsplit::Error>(())
//! ```

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod init;
pub mod niw;
pub mod par;
pub mod sampler;
pub mod st;

pub use data::Dataset;
pub use error::{Error, Result};
pub use init::{SplitInitializer, SubAssignment};
pub use niw::{GaussianParams, NiwParams, SuffStats};
pub use par::Execution;
pub use sampler::{fit, fit_with, IterationTrace, ModelState, Sampler, SamplerConfig, TraceRow};
