pub mod analysis;
pub mod client;
pub mod config;
pub mod materials;
pub mod parsing;
pub mod protocol;
pub mod records;
pub mod reporting;
