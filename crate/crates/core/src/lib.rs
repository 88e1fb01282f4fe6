//! Sentiment attitude extraction between named entities.
//!
//! The pipeline turns annotated documents into single-sentence contexts with
//! masked participants and frame-polarity terms, encodes them with one of
//! several (optionally attentive) context encoders, classifies each context
//! into positive / negative / neutral, and evaluates document-level opinions
//! with macro-averaged F1. The [`analysis`] module inspects the attention
//! weights learned by attentive encoders.

pub mod analysis;
pub mod cache;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod encoders;
pub mod error;
pub mod gradsuite;
pub mod lexicons;
pub mod model;
pub mod pipeline;
pub mod sentiment;
pub mod synthetic;
pub mod tensorgrad;
pub mod termizer;

pub use error::{Error, Result};
pub use sentiment::Sentiment;
