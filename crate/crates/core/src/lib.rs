//! Core library for building and scoring a dynamic retrieval-augmented
//! generation benchmark.
//!
//! The pipeline runs in this order:
//!
//! 1. [`kg`] extracts triplets from documents, normalizes them against an
//!    external knowledge base and keeps only novel facts.
//! 2. [`sampler`] enumerates subgraphs matching the four question templates.
//! 3. [`generation`] turns each subgraph into a question/answer pair.
//! 4. [`filtering`] runs the filter cascade and cuts the per-type test set.
//! 5. [`dataset`] packages the test set into a versioned revision with
//!    public and private splits.
//! 6. [`evaluation`] validates and scores submissions using [`metrics`].

pub mod backend;
pub mod dataset;
pub mod evaluation;
pub mod filtering;
pub mod generation;
pub mod kg;
pub mod metrics;
pub mod pipeline;
pub mod sampler;
pub mod submission;
pub mod text;

#[cfg(any(test, feature = "testkit"))]
pub mod testkit;

pub use sampler::QuestionType;
