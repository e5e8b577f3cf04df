//! Report builders and the experiment harness behind the `atspp` binary.

pub mod experiment;
pub mod report;
