//! Command-line tools and the HTTP session service.

pub mod cli;
pub mod load;
pub mod server;
pub mod store;
