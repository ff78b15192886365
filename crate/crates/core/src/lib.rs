//! Evaluation harness that asks text-only language models for audio
//! synthesis code, runs that code, and scores the audio it produces.
//!
//! The stages follow one sample through the system: [`corpus`] picks the
//! targets, [`prompt`] renders what the model sees, [`gateway`] talks to the
//! model, [`sandbox`] runs the returned program and validates its WAV output,
//! [`embed`] fetches embeddings, [`metrics`] scores them and [`pipeline`]
//! ties it all together with resumable on-disk state.

// `!(x > 0.0)` style checks are how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod embed;
pub mod gateway;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod prompt;
pub mod rng;
pub mod sandbox;
