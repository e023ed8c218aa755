//! Scale-free H∞ almost output synchronization for networks of heterogeneous
//! linear agents: structural checks, homogenizing precompensators, protocol
//! gains, closed-loop analysis and simulation.
//!
//! The guide in `book/` walks through the pipeline; its code blocks run as
//! doc-tests of this crate.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod graph;
pub mod homog;
pub mod lti;
pub mod netsim;
pub mod numlin;
pub mod protocol;
pub mod scenario;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/linear-algebra.md")]
    mod linear_algebra {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/homogenization.md")]
    mod homogenization {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/closed-loop.md")]
    mod closed_loop {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
}
