//! Executable dataflow dialogues over MultiWOZ 2.2.

pub mod convert;
pub mod data;
pub mod domains;
pub mod engine;
pub mod lang;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod templates;
