//! Experiment laboratory.
