//! Synthetic LiDAR-to-camera depth projection.
//!
//! Renders box-and-plane scenes, sparsifies the LiDAR view, projects it into
//! a displaced RGB camera (producing see-through noise), filters the result
//! down to reliable points, and scores predictions with the usual depth
//! completion losses and metrics.

pub mod depth_image;
pub mod error;
pub mod filter;
pub mod geometry;
pub mod kv;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod scene;
pub mod sparsify;

pub use depth_image::{BinaryMask, DenseDepthMap, DepthGrid, Provenance, SparseDepthMap};
pub use error::{Error, Result};
pub use filter::{filter_reliable, noise_rate, FilterParams, NoiseReport, ReliablePointSet, SweepConfig, SweepResult};
pub use geometry::{CameraGeometry, CameraIntrinsics, CameraRig, RgbCamera, RigidTransform};
pub use metrics::{compute_metrics, MetricReport};
pub use projection::{project_sparse, ProjectionStats};
pub use scene::{generate_scene, render_depth, Scene, SceneGenConfig};
