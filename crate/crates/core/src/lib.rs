//! Headless simulator and analytics toolkit for gaze-contingent tunnel-vision
//! experiments: kinetic perimetry, visual-field masks, three adaptive visual
//! tasks driven by synthetic gaze agents, saccade/gaze analytics, and a
//! group-equivalence statistics pipeline.
//!
//! The crate is organized around the data flow of a study:
//!
//! 1. [`perimetry`] measures a [`model::VisualFieldProfile`] from a responder.
//! 2. [`mask`] turns a profile into a gaze-contingent alpha mask.
//! 3. [`tasks`] simulate tracking / search / navigation trials with
//!    [`agents`] that perceive the world only through the mask.
//! 4. [`metrics`] extracts saccade and visual-field parameters from the
//!    recorded traces.
//! 5. [`stats`] runs the detrending + TOST + group-difference pipeline.
//! 6. [`study`] and [`report`] orchestrate whole multi-session studies.
//!
//! Batch operations (sweeps, participants, trials, seeds) run through
//! [`exec::map_ordered`], which is backed by rayon when the `parallel`
//! feature (default) is enabled and falls back to a plain sequential map
//! otherwise. Output ordering is identical in both modes.

pub mod agents;
pub mod analysis;
pub mod cohort;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod log;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod perimetry;
pub mod report;
pub mod stats;
pub mod study;
pub mod tasks;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
