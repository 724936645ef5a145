//! Awareness-based GUI assurance testbed.
//!
//! A simulated backend produces a stream of JSON model messages, a GUI
//! renders them to raster frames, an interpreter recovers the warning mode
//! from each frame with a template-matching detector, and the validator
//! checks that the filtered interpretation equals the filtered message.

pub mod canonical;
pub mod detector;
pub mod distinguisher;
pub mod interpreter;
pub mod model;
pub mod raster;
pub mod renderer;
pub mod scenario;
pub mod specgen;
pub mod validator;

pub use canonical::{apply_filter, canonicalize, CanonicalJson, FilterSpec};
pub use model::{GeoPoint, HazardZone, ModelMessage, WarningMode};
