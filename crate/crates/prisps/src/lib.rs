//! Scenario runner around `prisps-core`: file formats for events, policies,
//! topologies, and scenarios; the bundled reference fixture; and the pipeline
//! that wires policy evaluation, query rewriting, operator placement, count
//! sanitization, and adversary evaluation into one reproducible run.

pub mod cli;
pub mod fixtures;
pub mod formats;
pub mod scenario;
