//! Deterministic simulation stack for shared-autonomy hull inspection.
//!
//! A teleoperated (or mission-driven) leader broadcasts its pose over a lossy
//! link; a follower, driven by a scripted baseline or a learned Q-network,
//! holds a PoI-centred formation while keeping the PoI inside its sonar
//! footprint. Missions run on a behavior-tree executive and are issued as
//! natural-language commands.

pub mod bt;
pub mod comms;
pub mod geometry;
pub mod guidance;
pub mod intent;
pub mod metrics;
pub mod rl;
pub mod scene;
pub mod session;
pub mod sonar;
pub mod world;

pub use geometry::Vec2;
