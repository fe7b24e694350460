//! Physics motion scripts to coarse video scaffolds, and scaffold injection
//! into flow-matching sampling.
//!
//! Stages: [`motion_script`] parses and validates scripts, [`trajectory`]
//! fits motion primitives and densifies them to per-frame states,
//! [`compositor`] warps entity assets into a coarse video, [`latent`] maps
//! frames and masks into latent space, [`fusion`] runs the sampler with
//! scaffold injection, and [`reason`] drives the external reasoning models
//! through a record/replay fixture store.

pub mod compositor;
pub mod fusion;
pub mod geometry;
pub mod latent;
pub mod motion_script;
pub mod raster;
pub mod reason;
pub mod trajectory;
pub mod transport;

pub use geometry::Vec2;
