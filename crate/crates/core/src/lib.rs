//! Cross-lingual named entity recognition with a character-level CNN, a
//! bidirectional LSTM and a locally normalized transition decoder. Two
//! languages can be trained jointly with configurable parameter sharing so a
//! low-resource language benefits from a high-resource one.

pub mod autodiff;
pub mod bilstm;
pub mod charcnn;
pub mod cli;
pub mod corpus;
pub mod decoder;
pub mod lexicon;
pub mod model;
pub mod rng;
pub mod training;
