//! Guided journaling engine: a six-phase dialogue that turns an
//! adolescent's account of their day into a four-panel comic journal.
//!
//! The [`engine`] drives the dialogue, the [`pipeline`] and [`scene`]
//! modules do the provider-backed work through the [`gateway`], and
//! [`store`] and [`analytics`] keep and measure the results.

pub mod analytics;
pub mod clock;
pub mod engine;
pub mod gateway;
pub mod model;
pub mod phrases;
pub mod pipeline;
pub mod replay;
pub mod scene;
pub mod speech;
pub mod store;

pub use engine::{expected_inputs, Caps, Engine, EngineConfig, EngineError, Outcome};
pub use model::*;
