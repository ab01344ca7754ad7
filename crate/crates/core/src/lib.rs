//! Dataset curation and benchmark scoring over precomputed embeddings.
//!
//! * [`filter`]: image/caption similarity filtering and caption dedup
//! * [`transfer`]: caption rewriting through a pluggable generation backend
//! * [`assignment`]: sparse top-k similarity and one-to-one matching
//! * [`manifest`]: pair manifests and dataset composition
//! * [`scoring`]: forced-choice, Winoground-style and METEOR scorers
//! * [`pipeline`]: the curation steps chained through files

pub mod assignment;
pub mod cli;
pub mod embedding;
pub mod filter;
pub mod fixture;
pub mod manifest;
pub mod pipeline;
pub mod scoring;
pub mod stem;
pub mod transfer;
