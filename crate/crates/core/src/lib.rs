//! Measures how much decoding accuracy rides on landmark frames: frames are
//! re-weighted or dropped in per-frame acoustic score matrices, the result is
//! Viterbi-decoded and scored by phone error rate against a baseline.

pub mod corpus_io;
pub mod decoder;
pub mod experiment;
pub mod landmark;
pub mod scoring;
pub mod stats;
pub mod strategy;
pub mod synth;
