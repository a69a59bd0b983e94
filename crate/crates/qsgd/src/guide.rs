//! The book chapters, compiled as doc-tests.
//!
//! mdBook renders `book/` for reading; including the same markdown here makes
//! `cargo test --doc` build and run every code snippet, so the guide cannot
//! drift from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/estimator.md")]
pub mod estimator {}

#[doc = include_str!("../../../book/src/inference.md")]
pub mod inference {}

#[doc = include_str!("../../../book/src/oracle.md")]
pub mod oracle {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
