//! Symbolic core of a two-stage piano cover generator.
//!
//! A piano performance is quantized to a sixteenth grid ([`midi`]), reduced to
//! a lead sheet ([`leadsheet`]), and interleaved bar by bar with the
//! performance as compound-word tokens ([`tokenizer`]). A small decoder-only
//! model ([`performer`]) learns to continue the piano side given the lead
//! sheet, and [`metrics`] scores a generated top line against an f0 contour.

pub mod leadsheet;
pub mod metrics;
pub mod midi;
pub mod performer;
pub mod scalar;
pub mod tokenizer;

pub use scalar::Scalar;

pub type Performer32 = performer::Performer<f32>;
pub type Performer64 = performer::Performer<f64>;
pub type Trainer32 = performer::Trainer<f32>;
pub type Trainer64 = performer::Trainer<f64>;
pub type F0Contour32 = metrics::F0Contour<f32>;
pub type F0Contour64 = metrics::F0Contour<f64>;
