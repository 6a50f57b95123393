pub mod agent;
pub mod aggregate;
pub mod argument;
pub mod decision;
pub mod kb;
pub mod lang;
pub mod bench;
pub mod session;
#[cfg(feature = "server")]
pub mod service;
