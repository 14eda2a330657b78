//! Short answer grading from a single similarity feature.
//!
//! The pipeline tokenizes each answer, embeds the tokens with an
//! [`embedding::EmbeddingProvider`], sums the token vectors into a sentence
//! vector, and compares student and desired answers by cosine similarity.
//! The rescaled similarity is the only input to an isotonic, linear or ridge
//! regressor, which is evaluated by RMSE and Pearson correlation over
//! repeated seeded train/test splits.

pub mod dataset;
pub mod embedding;
pub mod evaluation;
pub mod features;
pub mod regression;
