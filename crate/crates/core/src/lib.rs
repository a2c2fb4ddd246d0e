//! Tooling for type-aware variable-misuse bug detection research: bug
//! injection, type-checker labeling, detectors and cascades, evaluation
//! metrics and corpus filtering.

pub mod corpus;
pub mod detect;
pub mod label;
pub mod metrics;
pub mod mutate;
mod rng;
pub mod source;
pub mod typecheck;

pub use rng::keyed_rng;
