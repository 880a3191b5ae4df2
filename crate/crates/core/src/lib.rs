//! Aspect-based sentiment classification over knowledge-enhanced
//! heterogeneous dependency graphs.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`corpus`] loads labelled sentences, dependency parses and word
//!    vectors, and pools each multi-word aspect into a single row.
//! 2. [`kg`] looks up the aspect and the sentence's sentiment words in local
//!    ConceptNet- and SenticNet-style triple snapshots and rescales the
//!    token rows that relate to what it finds.
//! 3. [`hdg`] builds two typed graphs per instance: words with sentiment
//!    nodes, and knowledge entities with a sentence node.
//! 4. [`model`] runs typed graph convolution, type/node dual-channel
//!    attention and a transformer block in alternating rounds, then
//!    classifies the fused aspect representation. [`train`] drives it.
//!
//! Everything numeric sits on the small reverse-mode engine in [`autograd`].

pub mod autograd;
pub mod corpus;
pub mod hdg;
pub mod kg;
pub mod model;
pub mod train;
