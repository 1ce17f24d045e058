//! Two-stage spatial simulator for the origins of captives in a regional
//! trade network.
//!
//! The first stage turns dated, located conflict events into a continuous
//! annual intensity surface (simple kriging under a Matérn covariance),
//! normalizes it into a capture-location density and samples from it. The
//! second stage routes each sampled captive through the year's trade network,
//! modelled as a Markov decision process with absorbing point-of-sale states,
//! and records where the captive was sold. Aggregating many captives gives
//! conditional origin maps (kernel density estimates restricted to a set of
//! points of sale) and χ² scores against port totals and ship ledgers.
//!
//! Module map:
//!
//! * [`geodata`] – input datasets, planar projection, region polygons
//! * [`grid`] – raster type shared by kriging and KDE output
//! * [`surface`] – Matérn covariance, GP log-density, variogram, kriging, sampling
//! * [`kde`] – bivariate Gaussian KDE and conditional origin maps
//! * [`network`] – annual trade network, conflict-scaled costs, sale sinks
//! * [`mdp`] – model construction, policy/value iteration, rollouts
//! * [`simulate`] – per-year pipeline, χ² scoring, parameter search
//! * [`contour`] – marching-squares isolines for the contour layer
//! * [`config`] – TOML run configuration with embedded defaults
//! * [`bundle`] – on-disk artifact layout shared by the CLI and the server

pub mod bundle;
pub mod config;
pub mod contour;
pub mod error;
pub mod geodata;
pub mod grid;
pub mod kde;
pub mod mdp;
pub mod network;
pub mod rng;
pub mod simulate;
pub mod surface;

pub use error::{Error, ErrorCategory, Result};
pub use geodata::{GeoData, GeoFrame, LonLat, PointKm};
pub use grid::{GridKind, GridSpec, IntensityGrid};
