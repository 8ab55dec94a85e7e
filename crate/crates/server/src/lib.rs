//! Game server and command line for the sketch classifier.

pub mod cli;
pub mod protocol;
pub mod server;
pub mod session;
