//! Environment detection, per-environment experts and the safety monitor.

mod experts;
mod features;
mod gmm;
mod safety;

pub use experts::{Directive, ExpertManager, ExpertMode, ExplorationStatus};
pub use features::{augment_observation, AbrFeatureTracker, FeatureScales, StragglerFeatureTracker, WorkloadFeatures};
pub use gmm::{Detection, GmmComponent, GmmConfig, GmmDetector};
pub use safety::{Controller, SafetyConfig, SafetyMonitor, Transition};
