//! Volumetric reconstruction of multi-story buildings from indoor point
//! clouds.
//!
//! Planes are detected with RANSAC, clutter is removed by ray casting
//! against the plane occupancy, and points are grouped into rooms by
//! Markov clustering of a patch visibility graph. Observed and virtual
//! wall surfaces are paired into wall candidates whose planes cut the
//! scene into a cell complex: an exact 2D line arrangement extruded over
//! the horizontal cuts. Every cell then receives exactly one of outside or
//! a room, plus any number of walls containing it, by solving a 0-1
//! program with [`ilp::solve`]. The labeling becomes a [`model::BuildingModel`]
//! of rooms, walls, wall intersections and their adjacency.
//!
//! Label numbering: 0 is outside, rooms follow from 1, then walls.
//!
//! ```no_run
//! use bimrecon::{config::Config, pipeline, pointcloud};
//!
//! let cloud = pointcloud::load("scan.ply".as_ref())?;
//! let rec = pipeline::run_cloud(cloud, &Config::default())?;
//! println!("{} rooms, {} walls", rec.model.rooms.len(), rec.model.walls.len());
//! # Ok::<(), bimrecon::Error>(())
//! ```
//!
//! Examples, one per capability (`cargo run --release --example NAME`):
//!
//! | example | shows |
//! |---|---|
//! | `segment_rooms` | plane detection, cleaning and room labeling scored against ground truth |
//! | `cell_complex` | exact line arrangement and the cell complex of two rooms |
//! | `label_cells` | priors, the 0-1 program, LP export and the solver; takes α as argument |
//! | `export_meshes` | model extraction, OBJ and binary meshes written to a directory |
//! | `config_file` | configuration parsing, overrides and validation errors |
//! | `session_client` | the HTTP session driven by a client |
//! | `reconstruct_synthetic` | the whole pipeline on a synthetic scene with scores |
//!
//! The `reconstruct` binary exposes the same as `run`, `stage`, `synth`
//! and `serve` subcommands.

pub mod bitmap;
pub mod candidates;
pub mod cleaning;
pub mod complex;
pub mod config;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod geom;
pub mod ilp;
pub mod model;
pub mod pipeline;
pub mod planes;
pub mod pointcloud;
pub mod priors;
pub mod raycast;
pub mod roomlabel;
pub mod service;
pub mod synthgen;

pub use error::{Error, Result};
