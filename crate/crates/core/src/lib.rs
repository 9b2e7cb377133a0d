//! Explainable AI-generated image detection at desk scale.
//!
//! Two frozen visual experts feed a small autoregressive policy that both
//! explains and classifies an image; expert and policy logits are fused at
//! the verdict token. Training data comes from a jury of annotator models.

pub mod data;
pub mod evalkit;
pub mod experts;
pub mod fusion;
pub mod imaging;
pub mod jury;
pub mod nn;
pub mod policy;
pub mod pipeline;
