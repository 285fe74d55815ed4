//! Granular, explainable scoring for generated radiology reports.

pub mod baselines;
pub mod batch;
pub mod corpus;
pub mod extraction;
pub mod gateway;
pub mod matching;
pub mod model;
pub mod parallel;
pub mod scoring;
pub mod stats;
pub mod synth;
