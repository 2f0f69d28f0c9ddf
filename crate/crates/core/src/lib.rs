//! Neural generalized cylinders.
//!
//! A shape is covered by generalized cylinders (GCs). Each GC defines a
//! relative coordinate system `(t, a, b)`; a shared network maps relative
//! coordinates plus a per-GC latent code to a signed distance. Editing the
//! cylinders (curve, radii, frames) deforms the shape without touching the
//! network.

pub mod edit;
pub mod extract;
pub mod geometry;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod shapes;
