//! Pinhole cameras, rigid transforms and camera rigs.
//!
//! Pixel coordinates are `(u, v) = (column, row)` with the origin at the
//! top-left pixel and pixel centers at integer coordinates. No lens
//! distortion is modeled.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::kv;

pub type Point3 = Vector3<f64>;

/// Tolerance on orthonormality and determinant of accepted rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    fn validate(&self) -> Result<()> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera(format!(
                "image size must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        let inside = |c: f64, n: usize| c.is_finite() && c >= 0.0 && c < n as f64;
        if !inside(self.cx, self.width) || !inside(self.cy, self.height) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Square-pixel camera with horizontal field of view `fov_deg` and the
    /// principal point at the image center, `((width-1)/2, (height-1)/2)`.
    pub fn from_fov(width: usize, height: usize, fov_deg: f64) -> Result<Self> {
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::InvalidCamera(format!("field of view {fov_deg} out of (0, 180)")));
        }
        let f = (width as f64 / 2.0) / (fov_deg.to_radians() / 2.0).tan();
        Self::new(
            f,
            f,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    /// Intrinsics of the sub-image with top-left corner `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::InvalidCamera(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{} image",
                self.width, self.height
            )));
        }
        Self::new(
            self.fx,
            self.fy,
            self.cx - x0 as f64,
            self.cy - y0 as f64,
            width,
            height,
        )
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        u < self.width && v < self.height
    }
}

/// Rendering geometry of the synthetic cameras: a square sensor with a given
/// horizontal FOV, center-cropped to the evaluation size and then cropped to
/// its top rows for training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraGeometry {
    pub sensor_size: usize,
    pub fov_deg: f64,
    pub eval_width: usize,
    pub eval_height: usize,
    pub train_height: usize,
}

impl Default for CameraGeometry {
    fn default() -> Self {
        CameraGeometry {
            sensor_size: 1392,
            fov_deg: 90.0,
            eval_width: 1216,
            eval_height: 356,
            train_height: 256,
        }
    }
}

impl CameraGeometry {
    pub fn sensor(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::from_fov(self.sensor_size, self.sensor_size, self.fov_deg)
    }

    /// Top-left corner of the centered evaluation crop.
    pub fn eval_offset(&self) -> (usize, usize) {
        (
            self.sensor_size.saturating_sub(self.eval_width) / 2,
            self.sensor_size.saturating_sub(self.eval_height) / 2,
        )
    }

    pub fn eval_crop(&self) -> Result<CameraIntrinsics> {
        let (x0, y0) = self.eval_offset();
        self.sensor()?.crop(x0, y0, self.eval_width, self.eval_height)
    }

    pub fn train_crop(&self) -> Result<CameraIntrinsics> {
        let (x0, y0) = self.eval_offset();
        self.sensor()?.crop(x0, y0, self.eval_width, self.train_height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entries".into()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho > ROTATION_TOLERANCE {
            return Err(Error::InvalidTransform(format!(
                "rotation not orthonormal (max |R^T R - I| = {ortho:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidTransform(format!("rotation determinant {det} != 1")));
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Result<Self> {
        let axis = Unit::try_new(axis, 1e-12)
            .ok_or_else(|| Error::InvalidTransform("zero rotation axis".into()))?;
        Self::new(*Rotation3::from_axis_angle(&axis, angle).matrix(), translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }
}

/// Lifts pixel `(u, v)` at metric `depth` into the camera frame.
pub fn backproject(pixel: (usize, usize), depth: f64, k: &CameraIntrinsics) -> Result<Point3> {
    let (u, v) = pixel;
    if !(depth.is_finite() && depth > 0.0) {
        return Err(Error::InvalidDepth(depth));
    }
    if !k.contains(u, v) {
        return Err(Error::OutOfBounds {
            u,
            v,
            width: k.width,
            height: k.height,
        });
    }
    Ok(Vector3::new(
        (u as f64 - k.cx) * depth / k.fx,
        (v as f64 - k.cy) * depth / k.fy,
        depth,
    ))
}

/// Continuous image position of a projected point, before quantization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Projects a camera-frame point. No bounds check; callers clip.
pub fn project(p: &Point3, k: &CameraIntrinsics) -> Result<ImagePoint> {
    if p.z.is_nan() || p.z <= 0.0 {
        return Err(Error::BehindCamera(p.z));
    }
    Ok(ImagePoint {
        u: k.fx * p.x / p.z + k.cx,
        v: k.fy * p.y / p.z + k.cy,
        depth: p.z,
    })
}

pub fn transform_point(t: &RigidTransform, p: &Point3) -> Point3 {
    t.transform_point(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgbCamera {
    pub name: String,
    pub intrinsics: CameraIntrinsics,
    /// Maps points from the LiDAR frame into this camera's frame.
    pub lidar_to_camera: RigidTransform,
}

/// A virtual LiDAR (dense depth camera) plus the RGB cameras it projects into.
/// The LiDAR frame doubles as the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    pub lidar: CameraIntrinsics,
    cameras: Vec<RgbCamera>,
}

pub const LIDAR_BLOCK: &str = "lidar";

impl CameraRig {
    pub fn new(lidar: CameraIntrinsics, cameras: Vec<RgbCamera>) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::InvalidCamera("rig needs at least one RGB camera".into()));
        }
        let mut seen = HashSet::new();
        for cam in &cameras {
            if cam.name == LIDAR_BLOCK || cam.name.is_empty() || !seen.insert(cam.name.as_str()) {
                return Err(Error::InvalidCamera(format!(
                    "invalid or duplicate camera name `{}`",
                    cam.name
                )));
            }
        }
        Ok(CameraRig { lidar, cameras })
    }

    /// Left and right cameras displaced `offset` meters along x on either
    /// side of the LiDAR, with parallel optical axes.
    pub fn symmetric_stereo(lidar: CameraIntrinsics, rgb: CameraIntrinsics, offset: f64) -> Result<Self> {
        // camera center c in the LiDAR frame maps to t = -c
        let cam = |name: &str, cx: f64| RgbCamera {
            name: name.into(),
            intrinsics: rgb,
            lidar_to_camera: RigidTransform::from_translation(Vector3::new(-cx, 0.0, 0.0)),
        };
        Self::new(lidar, vec![cam("left", -offset), cam("right", offset)])
    }

    pub fn cameras(&self) -> &[RgbCamera] {
        &self.cameras
    }

    pub fn camera(&self, name: &str) -> Option<&RgbCamera> {
        self.cameras.iter().find(|c| c.name == name)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_blocks(&kv::parse_file(path)?, path)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let path = Path::new("<calibration>");
        Self::from_blocks(&kv::parse_str(text, path)?, path)
    }

    fn from_blocks(blocks: &[kv::Block], path: &Path) -> Result<Self> {
        let mut lidar = None;
        let mut cameras = Vec::new();
        for block in blocks {
            let name = block.require("name")?;
            let k = parse_intrinsics(block)?;
            if name == LIDAR_BLOCK {
                block.check_keys(&["name", "fx", "fy", "cx", "cy", "width", "height"])?;
                if lidar.replace(k).is_some() {
                    return Err(block.error(block.line, "duplicate `lidar` block"));
                }
                continue;
            }
            block.check_keys(&["name", "fx", "fy", "cx", "cy", "width", "height", "R", "t"])?;
            let r: Vec<f64> = block
                .parse_array("R", 9)?
                .ok_or_else(|| block.error(block.line, "missing key `R`"))?;
            let t: Vec<f64> = block
                .parse_array("t", 3)?
                .ok_or_else(|| block.error(block.line, "missing key `t`"))?;
            let transform = RigidTransform::new(
                Matrix3::from_row_slice(&r),
                Vector3::new(t[0], t[1], t[2]),
            )
            .map_err(|e| block.error(block.line, e.to_string()))?;
            cameras.push(RgbCamera {
                name: name.to_string(),
                intrinsics: k,
                lidar_to_camera: transform,
            });
        }
        let lidar = lidar.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: "missing `lidar` block".into(),
        })?;
        Self::new(lidar, cameras)
    }

    pub fn to_calibration_string(&self) -> String {
        let mut blocks = vec![intrinsics_block(LIDAR_BLOCK, &self.lidar)];
        for cam in &self.cameras {
            let mut b = intrinsics_block(&cam.name, &cam.intrinsics);
            let r = cam.lidar_to_camera.rotation();
            let rows: Vec<String> = (0..3)
                .flat_map(|i| (0..3).map(move |j| r[(i, j)].to_string()))
                .collect();
            b.push("R", rows.join(" "));
            let t = cam.lidar_to_camera.translation();
            b.push("t", format!("{} {} {}", t.x, t.y, t.z));
            blocks.push(b);
        }
        kv::render(&blocks)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_calibration_string())?;
        Ok(())
    }
}

fn parse_intrinsics(block: &kv::Block) -> Result<CameraIntrinsics> {
    CameraIntrinsics::new(
        block.parse_required("fx")?,
        block.parse_required("fy")?,
        block.parse_required("cx")?,
        block.parse_required("cy")?,
        block.parse_required("width")?,
        block.parse_required("height")?,
    )
    .map_err(|e| block.error(block.line, e.to_string()))
}

fn intrinsics_block(name: &str, k: &CameraIntrinsics) -> kv::Block {
    let mut b = kv::Block::new("<generated>");
    b.push("name", name);
    b.push("fx", k.fx);
    b.push("fy", k.fy);
    b.push("cx", k.cx);
    b.push("cy", k.cy);
    b.push("width", k.width);
    b.push("height", k.height);
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k100() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap()
    }

    #[test]
    fn backproject_examples() {
        let k = k100();
        assert_eq!(backproject((50, 50), 10.0, &k).unwrap(), Vector3::new(0.0, 0.0, 10.0));
        assert_eq!(backproject((60, 50), 5.0, &k).unwrap(), Vector3::new(0.5, 0.0, 5.0));
        assert!(matches!(backproject((60, 50), 0.0, &k), Err(Error::InvalidDepth(_))));
        assert!(matches!(backproject((60, 50), -1.0, &k), Err(Error::InvalidDepth(_))));
        assert!(matches!(backproject((101, 0), 1.0, &k), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn project_examples() {
        let k = k100();
        let p = project(&Vector3::new(0.0, 0.0, 7.0), &k).unwrap();
        assert_eq!((p.u, p.v, p.depth), (50.0, 50.0, 7.0));
        let p = project(&Vector3::new(0.5, 0.0, 5.0), &k).unwrap();
        assert_eq!((p.u, p.v, p.depth), (60.0, 50.0, 5.0));
        assert!(matches!(project(&Vector3::new(0.0, 0.0, -1.0), &k), Err(Error::BehindCamera(_))));
        assert!(matches!(project(&Vector3::new(1.0, 0.0, 0.0), &k), Err(Error::BehindCamera(_))));
    }

    #[test]
    fn transform_examples() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(transform_point(&RigidTransform::identity(), &p), p);
        let t = RigidTransform::from_translation(Vector3::new(0.5, 0.0, 0.0));
        assert_eq!(t.transform_point(&Vector3::new(0.0, 0.0, 4.0)), Vector3::new(0.5, 0.0, 4.0));
        let t = RigidTransform::from_axis_angle(Vector3::new(1.0, 2.0, -0.5), 0.7, Vector3::new(0.3, -1.0, 2.0))
            .unwrap();
        let q = Vector3::new(-2.0, 1.0, 9.0);
        let back = t.inverse().transform_point(&t.transform_point(&q));
        assert!((back - q).amax() < 1e-9);
    }

    #[test]
    fn rejects_bad_rotations() {
        let scale = Matrix3::identity() * 1.001;
        assert!(RigidTransform::new(scale, Vector3::zeros()).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(reflect, Vector3::zeros()).is_err());
    }

    #[test]
    fn intrinsics_invariants() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 1, 1).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.0, 0.0, 1, 1).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0, 1).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 1, 1).is_ok());
    }

    #[test]
    fn default_geometry() {
        let g = CameraGeometry::default();
        let full = g.sensor().unwrap();
        assert!((full.fx - 696.0).abs() < 1e-9);
        assert_eq!(full.cx, 695.5);
        assert_eq!(g.eval_offset(), (88, 518));
        let train = g.train_crop().unwrap();
        assert_eq!(train.dims(), (1216, 256));
        assert_eq!((train.cx, train.cy), (607.5, 177.5));
        assert_eq!(g.eval_crop().unwrap().dims(), (1216, 356));
    }

    #[test]
    fn calibration_round_trip() {
        let k = CameraGeometry::default().train_crop().unwrap();
        let mut rig = CameraRig::symmetric_stereo(k, k, 0.5).unwrap();
        rig.cameras[1].lidar_to_camera =
            RigidTransform::from_axis_angle(Vector3::new(0.0, 1.0, 0.0), 0.01, Vector3::new(-0.5, 0.02, 0.0))
                .unwrap();
        let text = rig.to_calibration_string();
        assert_eq!(CameraRig::parse(&text).unwrap(), rig);
    }

    #[test]
    fn calibration_rejects_missing_keys() {
        let lidar = "name = lidar\nfx = 1\nfy = 1\ncx = 0\ncy = 0\nwidth = 2\nheight = 2\n";
        let cam = "name = left\nfx = 1\nfy = 1\ncx = 0\ncy = 0\nwidth = 2\nheight = 2\nR = 1 0 0 0 1 0 0 0 1\nt = 0 0 0\n";
        assert!(CameraRig::parse(&format!("{lidar}\n{cam}")).is_ok());
        assert!(CameraRig::parse(cam).is_err(), "no lidar block");
        assert!(CameraRig::parse(lidar).is_err(), "no rgb camera");
        for key in ["fx", "width", "R", "t"] {
            let broken: String = cam
                .lines()
                .filter(|l| !l.starts_with(&format!("{key} ")))
                .map(|l| format!("{l}\n"))
                .collect();
            let err = CameraRig::parse(&format!("{lidar}\n{broken}")).unwrap_err();
            assert!(err.to_string().contains(key), "{err}");
        }
        let dup = format!("{lidar}\n{cam}\n{cam}");
        assert!(CameraRig::parse(&dup).is_err());
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            -3.2f64..3.2,
            prop::array::uniform3(-5.0f64..5.0),
        )
            .prop_filter_map("degenerate axis", |(a, angle, t)| {
                RigidTransform::from_axis_angle(Vector3::from(a), angle, Vector3::from(t)).ok()
            })
    }

    proptest! {
        #[test]
        fn pixel_round_trip(u in 0usize..640, v in 0usize..480, depth in 0.1f64..200.0,
                            fx in 50.0f64..2000.0, fy in 50.0f64..2000.0) {
            let k = CameraIntrinsics::new(fx, fy, 319.5, 239.5, 640, 480).unwrap();
            let p = project(&backproject((u, v), depth, &k).unwrap(), &k).unwrap();
            prop_assert!((p.u - u as f64).abs() <= 1e-9);
            prop_assert!((p.v - v as f64).abs() <= 1e-9);
            prop_assert_eq!(p.depth, depth);
        }

        #[test]
        fn compose_is_sequential_application(a in arb_transform(), b in arb_transform(),
                                             p in prop::array::uniform3(-10.0f64..10.0)) {
            let p = Vector3::from(p);
            let lhs = a.compose(&b).transform_point(&p);
            let rhs = a.transform_point(&b.transform_point(&p));
            prop_assert!((lhs - rhs).amax() <= 1e-9);
            let id = a.compose(&a.inverse());
            prop_assert!((id.rotation() - Matrix3::identity()).amax() <= 1e-9);
            prop_assert!(id.translation().amax() <= 1e-9);
            let r = a.compose(&b);
            prop_assert!(RigidTransform::new(*r.rotation(), *r.translation()).is_ok());
        }
    }
}
