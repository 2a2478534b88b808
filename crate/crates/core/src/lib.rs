//! Dive-video analysis: register hand-held frames into a panorama, segment the
//! diver by colour, and turn the per-frame barycentres into a smoothed
//! trajectory with dive metrics.

mod par;
pub mod raster;
pub mod features;
pub mod ingest;
pub mod registration;
pub mod mosaic;
pub mod segmentation;
pub mod tracking;
pub mod synth;
pub mod config;
pub mod pipeline;
