//! Iterative decoding pipeline.
