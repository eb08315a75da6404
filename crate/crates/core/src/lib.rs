//! Sound source localization on ad-hoc microphone arrays.
//!
//! Scenes are sampled in [`scene`], rendered to microphone signals in
//! [`acoustics`], turned into GCC-PHAT and SLF features in [`features`] and
//! localized by the baselines in [`classical`] or the relation network in
//! [`neural`]. [`harness`] ties them into datasets, training runs and
//! evaluation reports.

pub mod acoustics;
pub mod classical;
pub mod dsp;
pub mod error;
pub mod features;
pub mod harness;
pub mod neural;
pub mod scene;
pub mod wav;

pub use error::{Error, Result};

// Compiles and runs the book's snippets as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/scenes.md")]
    mod scenes {}
    #[doc = include_str!("../../../book/src/acoustics.md")]
    mod acoustics {}
    #[doc = include_str!("../../../book/src/gcc-phat.md")]
    mod gcc_phat {}
    #[doc = include_str!("../../../book/src/classical.md")]
    mod classical {}
    #[doc = include_str!("../../../book/src/relation-network.md")]
    mod relation_network {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/results.md")]
    mod results {}
}
