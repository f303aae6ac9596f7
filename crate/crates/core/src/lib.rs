//! Affine-localizable leader/follower frameworks.
//!
//! The crate covers the whole pipeline: building frameworks out of
//! equilibrium units, verifying that followers are pinned down by leaders,
//! repairing frameworks when nodes join or leave (both centrally and through
//! a localized packet protocol), synthesizing sampled-sensing formation gains
//! and simulating the closed loop.

pub mod controller;
pub mod framework;
pub mod geometry;
pub mod lcc;
pub mod linalg;
pub mod reconfig;
pub mod simulator;

pub use framework::{NodeId, NominalFramework};
pub use geometry::{Point, PointSet, Tolerances};
