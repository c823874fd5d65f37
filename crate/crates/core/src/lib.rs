//! Learning-free, outlier-robust LiDAR mapping.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`geom`] · points, clouds, SE(3) poses, PCA plane fitting.
//! * [`ground_seg`] · cascaded concentric-zone ground segmentation.
//! * [`registration`] · ground pruning, translation-invariant measurements,
//!   GNC-TLS rotation search and component-wise translation voting.
//! * [`pose_graph`] · SE(3) pose graphs, GNC-weighted Gauss–Newton and loop
//!   detection.
//! * [`multi_session`] · map-to-map alignment and joint optimisation of two
//!   sessions.
//! * [`static_map`] · min-max height discrepancy and instance-level removal
//!   of dynamic points.
//! * [`synth`] · labelled ray-cast LiDAR simulator used to verify all of the
//!   above.
//! * [`io`], [`eval`], [`config`], [`pipeline`] · file formats, metrics,
//!   configuration and the end-to-end driver used by the CLI.

pub mod config;
pub mod error;
pub mod eval;
pub mod geom;
pub mod ground_seg;
pub mod io;
pub mod multi_session;
pub mod pipeline;
pub mod pose_graph;
pub mod registration;
pub mod spatial;
pub mod static_map;
pub mod synth;

pub use error::{Error, Result};
