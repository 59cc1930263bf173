//! Cross-layer soft-error resilience design-space exploration.

pub mod design;
pub mod profile;
pub mod toycore;
pub mod stats;
pub mod library;
pub mod parity;
pub mod select;
pub mod synth;
pub mod explore;
pub mod depend;
pub mod report;
