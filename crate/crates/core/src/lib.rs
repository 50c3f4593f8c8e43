//! Out-of-core stencil engine with temporal blocking, common-region sharing
//! and on-the-fly fixed-rate compression.

pub mod analysis;
pub mod codec;
pub mod engine;
pub mod experiment;
pub mod field;
pub mod kernel;
