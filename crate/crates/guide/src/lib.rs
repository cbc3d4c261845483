//! Runs the listings of the mdbook guide in `book/` as doctests, since
//! mdbook cannot link against workspace crates on its own.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/channel-model.md")]
pub mod channel_model {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/esprit.md")]
pub mod esprit {}
#[doc = include_str!("../../../book/src/sparse-recovery.md")]
pub mod sparse_recovery {}
#[doc = include_str!("../../../book/src/two-stage.md")]
pub mod two_stage {}
#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
