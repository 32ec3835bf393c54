//! Measures political bias in the output of text-generation models.
//!
//! The harness probes a model with headline-generation prompts over a set of
//! political topics, then analyses the generations on two tiers:
//!
//! * **Stance**: each topic's generations are embedded and compared against
//!   a pair of extreme anchor distributions (proponent / opponent
//!   generations elicited with explicit stance tags). The gap between the
//!   nearest-neighbor distances to the two anchor sets gives a signed
//!   leaning; a paired permutation test gates the proponent/opponent label
//!   behind p < 0.01.
//! * **Framing**: content bias as frame-dimension ratios (15 cross-cutting
//!   policy frames) and named-entity mention profiles normalized across
//!   models, plus style bias as target-entity polarity, a lexical polarity
//!   rate, and a media-bias rate.
//!
//! Everything external (generation, embedding, the four classifiers) goes
//! through [`gateway::Gateway`], which caches every call as a content-addressed
//! envelope and can replay a recorded bundle with zero network traffic.
//! [`pipeline`] drives the stages end to end and emits the report artifacts.

pub mod corpus;
pub mod error;
pub mod exec;
pub mod framing;
pub mod gateway;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod stance;
pub mod style;

pub use error::{Error, Result};
