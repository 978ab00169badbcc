//! Monocular localization inside a tubular scene: zone classification with a
//! twin-network embedding, followed by pose refinement against per-zone
//! triangulated landmark maps. A procedural tube renderer supplies images
//! with ground-truth poses.

pub mod classifier;
pub mod eval;
pub mod features;
pub mod geom;
pub mod image;
pub mod par;
pub mod sim;
pub mod zones;
