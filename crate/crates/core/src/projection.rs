//! Scatters a sparse depth map from the LiDAR camera into an RGB camera.
//!
//! Every valid source pixel is lifted with the LiDAR intrinsics, moved into
//! the RGB frame and reprojected, then snapped to the nearest pixel center
//! (ties to even). There is no z-buffer against the scene, so background
//! returns land on pixels whose foreground was not sampled: the see-through
//! artifact. When two points hit the same pixel the nearer one wins, which
//! makes the result independent of traversal order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::depth_image::{DepthGrid, Provenance, SparseDepthMap};
use crate::error::{Error, Result};
use crate::geometry::{backproject, project, CameraIntrinsics, CameraRig, RgbCamera, RigidTransform};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionStats {
    pub in_bounds: usize,
    pub out_of_bounds: usize,
    pub behind_camera: usize,
    pub collisions: usize,
}

#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub projected: SparseDepthMap,
    pub stats: ProjectionStats,
}

pub fn project_sparse(
    src: &SparseDepthMap,
    lidar: &CameraIntrinsics,
    lidar_to_rgb: &RigidTransform,
    rgb: &CameraIntrinsics,
) -> Result<ProjectionResult> {
    src.ensure_dims(lidar.dims())?;
    let (w, h) = rgb.dims();
    let mut depth = vec![f64::INFINITY; w * h];
    let mut stats = ProjectionStats::default();
    for (u, v, d) in src.iter_valid() {
        let p = lidar_to_rgb.transform_point(&backproject((u, v), d, lidar)?);
        let q = match project(&p, rgb) {
            Ok(q) => q,
            Err(Error::BehindCamera(_)) => {
                stats.behind_camera += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let (ur, vr) = (q.u.round_ties_even(), q.v.round_ties_even());
        if !(ur >= 0.0 && vr >= 0.0 && ur < w as f64 && vr < h as f64) {
            stats.out_of_bounds += 1;
            continue;
        }
        stats.in_bounds += 1;
        let k = vr as usize * w + ur as usize;
        if depth[k].is_finite() {
            stats.collisions += 1;
        }
        if q.depth < depth[k] {
            depth[k] = q.depth;
        }
    }
    let valid: Vec<bool> = depth.iter().map(|d| d.is_finite()).collect();
    let values = depth.into_iter().map(|d| if d.is_finite() { d } else { 0.0 }).collect();
    let projected = DepthGrid::from_parts(w, h, values, valid)?.into_sparse(Provenance::Projected);
    Ok(ProjectionResult { projected, stats })
}

/// Picks one of the rig's RGB cameras uniformly at random.
pub fn random_target_camera<'a, R: Rng + ?Sized>(rig: &'a CameraRig, rng: &mut R) -> &'a RgbCamera {
    let cams = rig.cameras();
    &cams[rng.random_range(0..cams.len())]
}
