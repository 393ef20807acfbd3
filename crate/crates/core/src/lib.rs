//! Multi-user adaptive tests over SMS.
//!
//! A fuzzy controller picks question difficulty from a player's schooling,
//! age and record; a session engine runs the keyword conversation; a gateway
//! rate-limits replies and exposes them over HTTP. See the guide in `book/`.

pub mod clock;
pub mod fuzzy;
pub mod gateway;
pub mod session;
pub mod simulate;
pub mod tables;
pub mod transcript;

// The guide's snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/fuzzy.md")]
    mod fuzzy {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/tables.md")]
    mod tables {}
    #[doc = include_str!("../../../book/src/gateway.md")]
    mod gateway {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
