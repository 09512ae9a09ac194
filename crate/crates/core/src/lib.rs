pub mod baselines;
pub mod boost;
pub mod ckl;
mod combine;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod linf;
pub mod simplex;
pub mod svm;

pub use combine::MklOptions;
pub use error::{MklError, Result};

// The guide's code blocks run as doc-tests through these modules.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/svm.md")]
    mod svm {}
    #[doc = include_str!("../../../book/src/linf.md")]
    mod linf {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/ckl.md")]
    mod ckl {}
    #[doc = include_str!("../../../book/src/boost.md")]
    mod boost {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
