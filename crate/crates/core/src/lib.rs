//! Escape rates for open subshifts of finite type and for special semi-flows
//! over them.

pub mod cli;
pub mod config;
pub mod error;
pub mod escape_flow;
pub mod gibbs;
pub mod open_system;
pub mod sft;
pub mod spectral;
pub mod suspension;

pub use error::{Error, Result};

// The guide's chapters are compiled as doc-tests so its examples stay in sync
// with the library; one module per chapter keeps failures attributable.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/shifts.md")]
    mod shifts {}
    #[doc = include_str!("../../../book/src/gibbs.md")]
    mod gibbs {}
    #[doc = include_str!("../../../book/src/open_systems.md")]
    mod open_systems {}
    #[doc = include_str!("../../../book/src/suspensions.md")]
    mod suspensions {}
    #[doc = include_str!("../../../book/src/flow_escape.md")]
    mod flow_escape {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
