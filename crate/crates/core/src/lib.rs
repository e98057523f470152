//! Link-level Monte Carlo simulator for grant-free irregular repetition
//! slotted ALOHA with a multi-antenna base station.
//!
//! A frame consists of `T` resource blocks. Each of `M` users is active with
//! probability `p_a` and, when active, sends replicas of its packet in the
//! blocks given by its column of the access pattern matrix, each preceded by
//! a length-`tau` pilot. The base station
//!
//! 1. detects the active users from the pilots of all blocks ([`uad`]),
//! 2. estimates the channels of detected users ([`chest`]),
//! 3. decodes packets with combining and successive interference
//!    cancellation ([`decode`]).
//!
//! [`crb`] gives the estimation bounds, [`harness`] runs Monte Carlo
//! experiments and [`config`] holds the system parameters.

pub mod chest;
pub mod config;
pub mod crb;
pub mod decode;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod scenario;
pub mod uad;

pub use config::SystemConfig;
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/scenario.md")]
    mod scenario {}
    #[doc = include_str!("../../../book/src/activity-detection.md")]
    mod activity_detection {}
    #[doc = include_str!("../../../book/src/channel-estimation.md")]
    mod channel_estimation {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
