//! Analysis and design of serially concatenated LDGM codes on the binary-input
//! AWGN channel.

pub mod analysis;
pub mod codec;
pub mod dde;
pub mod degree;
pub mod error;
pub mod grid;
pub mod llr;
pub mod optimizer;
pub mod special;

pub use analysis::{ChannelPoint, ThresholdOptions, ThresholdResult};
pub use dde::{CodeEnsemble, EnsembleSpec, DdeOptions, DdeStatus, DdeTrace, EnsembleKind};
pub use degree::{DegreeDistribution, Perspective, RateSpec};
pub use error::{Error, Result};
pub use grid::{LlrGrid, QuantizedPmf};
pub use optimizer::{Candidate, OptimizationConfig, SearchOutcome};
