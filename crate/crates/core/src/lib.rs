pub mod affinity;
pub mod cluster;
pub mod error;
pub mod experiment;
pub mod image;
pub mod metrics;
pub mod nlm;
pub mod noise;
pub mod patch;
pub mod psp;
pub mod solvers;

pub use error::{Error, Result};
pub use image::Image;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/images.md")]
    mod images {}
    #[doc = include_str!("../../../book/src/self-representation.md")]
    mod self_representation {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    mod clustering {}
    #[doc = include_str!("../../../book/src/denoising.md")]
    mod denoising {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
