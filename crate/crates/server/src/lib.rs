//! Command-line tools and the HTTP chat service.

pub mod api;
pub mod cli;
pub mod commands;
