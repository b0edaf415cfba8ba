//! Anchor-graph wayfinding for indoor and outdoor navigation.
//!
//! Maps are built from anchors (saved start/end points, each with its own
//! coordinate frame) and connections (recorded breadcrumb walks between two
//! anchors). Routes are planned over the anchor graph, stitched into one
//! frame through shared anchors, and turned into turn-by-turn guidance. A
//! seeded sensing simulator stands in for phone tracking so every behavior
//! can be reproduced off-device.

pub mod canonical;
pub mod geom;
pub mod guidance;
pub mod mapstore;
pub mod routing;
pub mod sensim;
pub mod sim;
pub mod workflows;
