//! The book chapters under `book/src`, compiled as doctests so the snippets
//! stay in sync with the library.

#[doc = include_str!("../../../book/src/index.md")]
mod index {}
#[doc = include_str!("../../../book/src/gossip.md")]
mod gossip {}
#[doc = include_str!("../../../book/src/engine.md")]
mod engine {}
#[doc = include_str!("../../../book/src/problems.md")]
mod problems {}
#[doc = include_str!("../../../book/src/analysis.md")]
mod analysis {}
#[doc = include_str!("../../../book/src/seeding.md")]
mod seeding {}
#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
