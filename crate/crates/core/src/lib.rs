//! Channel estimation for RIS-aided millimetre-wave MIMO links.
//!
//! The crate models a point-to-point link in which a base station with a
//! uniform linear array reaches a mobile station only through a passive
//! reconfigurable intelligent surface (RIS) laid out as a uniform planar
//! array. It provides
//!
//! * the channel model and a seeded path sampler ([`chanmodel`]),
//! * DFT-based training designs and identifiability checks ([`training`]),
//! * measurement synthesis, noise calibration and NMSE ([`sensing`]),
//! * grids, structured dictionaries, OMP and SOMP ([`sparsekit`]),
//! * DFT-beamspace ESPRIT estimators ([`espritkit`]),
//! * the two-stage estimator plus the LS and joint-CS baselines ([`trice`]),
//! * a deterministic Monte-Carlo harness emitting CSV ([`harness`]).
//!
//! Dense complex linear algebra lives in [`numkit`].
//!
//! ```
//! use rand::SeedableRng;
//! use rand_chacha::ChaCha8Rng;
//! use ris_chanest::{chanmodel, sensing, training, trice};
//!
//! let cfg = chanmodel::SystemConfig::desk_scale();
//! let mut rng = ChaCha8Rng::seed_from_u64(1);
//! let params = chanmodel::sample_paths(&cfg, &mut rng).unwrap();
//! let channels = chanmodel::realize(&cfg, &params).unwrap();
//! let train = training::build_training(&cfg).unwrap();
//! let y = sensing::synthesize(&cfg, &channels, &train).unwrap();
//!
//! let report = trice::run_trice(&y, &train, &cfg, &trice::Variant::Bes).unwrap();
//! assert!(sensing::nmse(&channels.h, &report.h_hat).unwrap() < 1e-7);
//! ```

pub mod chanmodel;
pub mod error;
pub mod espritkit;
pub mod harness;
pub mod numkit;
pub mod sensing;
pub mod sparsekit;
pub mod training;
pub mod trice;

pub use error::{Error, Result};
pub use numkit::{CMatrix, CVector, C64};
