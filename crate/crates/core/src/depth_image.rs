//! Dense and sparse depth grids, validity masks, and the 16-bit PNG codec.
//!
//! Depth files use the KITTI depth-completion layout: one 16-bit grayscale
//! channel with `code = round(depth_m * 256)` and `code = 0` for "no depth".
//! In memory, validity is a separate mask, never a sentinel value.

use std::fmt;
use std::ops::Deref;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEPTH_SCALE: f64 = 256.0;

/// Encodes a depth in meters as a non-zero 16-bit code.
///
/// Depths that round to code 0 (below 1/512 m) or past 65535 (at or above
/// 65535.5/256 m, just under 256 m) are rejected.
pub fn encode_depth(depth: f64) -> Result<u16> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(Error::DepthRange(depth));
    }
    let code = (depth * DEPTH_SCALE).round();
    if code < 1.0 || code > u16::MAX as f64 {
        return Err(Error::DepthRange(depth));
    }
    Ok(code as u16)
}

pub fn decode_depth(code: u16) -> Option<f64> {
    (code != 0).then(|| code as f64 / DEPTH_SCALE)
}

/// Row-major depth grid with per-pixel validity.
#[derive(Clone, PartialEq)]
pub struct DepthGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl fmt::Debug for DepthGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DepthGrid")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("valid_count", &self.valid_count())
            .finish()
    }
}

fn check_depth(d: f64) -> Result<()> {
    if d.is_finite() && d > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidDepth(d))
    }
}

impl DepthGrid {
    /// An all-invalid grid.
    pub fn new(width: usize, height: usize) -> Self {
        DepthGrid {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn from_parts(width: usize, height: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if values.len() != n || valid.len() != n {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (values.len(), valid.len()),
            });
        }
        let mut grid = DepthGrid {
            width,
            height,
            values,
            valid,
        };
        for k in 0..n {
            if grid.valid[k] {
                check_depth(grid.values[k])?;
            } else {
                grid.values[k] = 0.0;
            }
        }
        Ok(grid)
    }

    /// Builds a grid from `f(u, v)`; `None` marks an invalid pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Result<Self> {
        let mut grid = DepthGrid::new(width, height);
        for v in 0..height {
            for u in 0..width {
                grid.set(u, v, f(u, v))?;
            }
        }
        Ok(grid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        debug_assert!(u < self.width && v < self.height);
        v * self.width + u
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        self.get_index(self.index(u, v))
    }

    #[inline]
    pub fn get_index(&self, k: usize) -> Option<f64> {
        self.valid[k].then(|| self.values[k])
    }

    pub fn set(&mut self, u: usize, v: usize, depth: Option<f64>) -> Result<()> {
        if u >= self.width || v >= self.height {
            return Err(Error::OutOfBounds {
                u,
                v,
                width: self.width,
                height: self.height,
            });
        }
        let k = self.index(u, v);
        match depth {
            Some(d) => {
                check_depth(d)?;
                self.values[k] = d;
                self.valid[k] = true;
            }
            None => {
                self.values[k] = 0.0;
                self.valid[k] = false;
            }
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.valid_count() as f64 / self.len() as f64
        }
    }

    /// Valid pixels as `(u, v, depth)` in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.width.max(1);
        self.valid
            .iter()
            .enumerate()
            .filter(|(_, &ok)| ok)
            .map(move |(k, _)| (k % w, k / w, self.values[k]))
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() == dims {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: dims,
                actual: self.dims(),
            })
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::DimensionMismatch {
                expected: (x0 + width, y0 + height),
                actual: self.dims(),
            });
        }
        DepthGrid::from_fn(width, height, |u, v| self.get(u + x0, v + y0))
    }

    pub fn to_codes(&self) -> Result<Vec<u16>> {
        self.values
            .iter()
            .zip(&self.valid)
            .map(|(&d, &ok)| if ok { encode_depth(d) } else { Ok(0) })
            .collect()
    }

    pub fn from_codes(width: usize, height: usize, codes: &[u16]) -> Result<Self> {
        if codes.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (codes.len(), 1),
            });
        }
        Ok(DepthGrid {
            width,
            height,
            values: codes.iter().map(|&c| decode_depth(c).unwrap_or(0.0)).collect(),
            valid: codes.iter().map(|&c| c != 0).collect(),
        })
    }

    pub fn into_dense(self) -> DenseDepthMap {
        DenseDepthMap(self)
    }

    pub fn into_sparse(self, provenance: Provenance) -> SparseDepthMap {
        SparseDepthMap {
            grid: self,
            provenance,
        }
    }
}

/// Per-pixel depth with validity: renderer z-buffers, ground truth and
/// predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDepthMap(DepthGrid);

impl Deref for DenseDepthMap {
    type Target = DepthGrid;
    fn deref(&self) -> &DepthGrid {
        &self.0
    }
}

impl DenseDepthMap {
    pub fn into_grid(self) -> DepthGrid {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Bernoulli,
    Masked,
    Projected,
    Real,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Bernoulli => "bernoulli",
            Provenance::Masked => "masked",
            Provenance::Projected => "projected",
            Provenance::Real => "real",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseDepthMap {
    grid: DepthGrid,
    provenance: Provenance,
}

impl Deref for SparseDepthMap {
    type Target = DepthGrid;
    fn deref(&self) -> &DepthGrid {
        &self.grid
    }
}

impl SparseDepthMap {
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn grid(&self) -> &DepthGrid {
        &self.grid
    }

    pub fn into_grid(self) -> DepthGrid {
        self.grid
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryMask({}x{}, {} set)", self.width, self.height, self.popcount())
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (bits.len(), 1),
            });
        }
        Ok(BinaryMask { width, height, bits })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let bits = (0..height)
            .flat_map(|v| (0..width).map(move |u| (u, v)))
            .map(|(u, v)| f(u, v))
            .collect();
        BinaryMask { width, height, bits }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[v * self.width + u]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn row_counts(&self) -> Vec<usize> {
        if self.width == 0 {
            return vec![0; self.height];
        }
        self.bits
            .chunks(self.width)
            .map(|row| row.iter().filter(|&&b| b).count())
            .collect()
    }

    /// Reads a mask from any depth PNG: set wherever the code is non-zero.
    pub fn read_png(path: &Path) -> Result<Self> {
        let grid = read_depth_png(path)?;
        Ok(mask_of(&grid))
    }

    /// Writes the mask as a depth PNG with 1 m at every set pixel.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let grid = DepthGrid {
            width: self.width,
            height: self.height,
            values: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            valid: self.bits.clone(),
        };
        write_depth_png(&grid, path)
    }
}

fn mask_of(grid: &DepthGrid) -> BinaryMask {
    BinaryMask {
        width: grid.width,
        height: grid.height,
        bits: grid
            .values
            .iter()
            .zip(&grid.valid)
            .map(|(&d, &ok)| ok && d > 0.0)
            .collect(),
    }
}

pub fn mask_from_sparse(s: &SparseDepthMap) -> BinaryMask {
    mask_of(s)
}

/// Element-wise product of a mask with a dense map: valid where both are.
pub fn apply_mask(x: &DenseDepthMap, m: &BinaryMask) -> Result<SparseDepthMap> {
    x.ensure_dims(m.dims())?;
    let valid: Vec<bool> = x.valid.iter().zip(&m.bits).map(|(&a, &b)| a && b).collect();
    let values = x
        .values
        .iter()
        .zip(&valid)
        .map(|(&d, &ok)| if ok { d } else { 0.0 })
        .collect();
    Ok(SparseDepthMap {
        grid: DepthGrid {
            width: x.width,
            height: x.height,
            values,
            valid,
        },
        provenance: Provenance::Masked,
    })
}

pub fn write_depth_png(grid: &DepthGrid, path: &Path) -> Result<()> {
    let codes = grid.to_codes()?;
    let (w, h) = (grid.width as u32, grid.height as u32);
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w, h, codes).ok_or_else(|| Error::DimensionMismatch {
            expected: grid.dims(),
            actual: (0, 0),
        })?;
    img.save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

pub fn read_depth_png(path: &Path) -> Result<DepthGrid> {
    let malformed = |reason: String| Error::DepthFormat {
        path: path.to_path_buf(),
        reason,
    };
    let img = image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| malformed(e.to_string()))?;
    match img {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            DepthGrid::from_codes(w as usize, h as usize, buf.as_raw())
        }
        other => Err(malformed(format!(
            "expected 16-bit single-channel image, found {:?}",
            other.color()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant(w: usize, h: usize, d: f64) -> DenseDepthMap {
        DepthGrid::from_fn(w, h, |_, _| Some(d)).unwrap().into_dense()
    }

    #[test]
    fn codec_examples() {
        assert_eq!(encode_depth(1.0).unwrap(), 256);
        assert_eq!(encode_depth(12.345).unwrap(), 3160);
        assert_eq!(decode_depth(3160), Some(12.34375));
        assert_eq!(decode_depth(0), None);
        assert!(encode_depth(256.0).is_err());
        assert!(encode_depth(300.0).is_err());
        assert!(encode_depth(1e-4).is_err());
        assert_eq!(encode_depth(1.0 / 512.0).unwrap(), 1);
        assert_eq!(encode_depth(65535.0 / 256.0).unwrap(), u16::MAX);
    }

    #[test]
    fn mask_from_sparse_counts() {
        let empty = DepthGrid::new(4, 3).into_sparse(Provenance::Real);
        assert_eq!(mask_from_sparse(&empty).popcount(), 0);
        let mut g = DepthGrid::new(4, 3);
        for (u, v) in [(0, 0), (3, 1), (2, 2)] {
            g.set(u, v, Some(7.5)).unwrap();
        }
        assert_eq!(mask_from_sparse(&g.into_sparse(Provenance::Real)).popcount(), 3);
    }

    #[test]
    fn apply_mask_examples() {
        let x = constant(5, 3, 4.25);
        let all = apply_mask(&x, &BinaryMask::filled(5, 3, true)).unwrap();
        assert_eq!(all.validity(), x.validity());
        assert_eq!(all.provenance(), Provenance::Masked);
        assert_eq!(apply_mask(&x, &BinaryMask::filled(5, 3, false)).unwrap().valid_count(), 0);
        let checker = BinaryMask::from_fn(5, 3, |u, v| (u + v) % 2 == 0);
        let s = apply_mask(&x, &checker).unwrap();
        assert_eq!(s.valid_count(), (5 * 3usize).div_ceil(2));
        assert!(s.iter_valid().all(|(_, _, d)| d == 4.25));
        assert!(matches!(
            apply_mask(&x, &BinaryMask::filled(3, 5, true)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn grid_rejects_bad_depths() {
        let mut g = DepthGrid::new(2, 2);
        assert!(g.set(0, 0, Some(0.0)).is_err());
        assert!(g.set(0, 0, Some(f64::NAN)).is_err());
        assert!(g.set(0, 0, Some(-1.0)).is_err());
        assert!(g.set(2, 0, Some(1.0)).is_err());
        assert!(DepthGrid::from_parts(2, 2, vec![1.0; 3], vec![true; 4]).is_err());
        assert!(DepthGrid::from_parts(1, 1, vec![f64::INFINITY], vec![true]).is_err());
    }

    #[test]
    fn png_round_trip_and_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let g = DepthGrid::from_fn(7, 5, |u, v| ((u * v) % 3 != 0).then(|| 0.5 + (u + 7 * v) as f64 * 3.7))
            .unwrap();
        write_depth_png(&g, &path).unwrap();
        let back = read_depth_png(&path).unwrap();
        assert_eq!(back.to_codes().unwrap(), g.to_codes().unwrap());
        let nonzero = g.to_codes().unwrap().iter().filter(|&&c| c != 0).count();
        assert_eq!(BinaryMask::read_png(&path).unwrap().popcount(), nonzero);
    }

    #[test]
    fn png_rejects_out_of_range_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let g = DepthGrid::from_fn(2, 1, |u, _| Some(if u == 0 { 1.0 } else { 256.0 })).unwrap();
        assert!(matches!(
            write_depth_png(&g, &dir.path().join("x.png")),
            Err(Error::DepthRange(_))
        ));
        let junk = dir.path().join("junk.png");
        std::fs::write(&junk, b"not a png").unwrap();
        assert!(read_depth_png(&junk).is_err());
        let rgb = dir.path().join("rgb.png");
        image::RgbImage::new(2, 2).save(&rgb).unwrap();
        assert!(matches!(read_depth_png(&rgb), Err(Error::DepthFormat { .. })));
    }

    proptest! {
        #[test]
        fn codec_error_bound(d in (1.0 / 512.0)..(65535.5 / 256.0)) {
            if let Ok(code) = encode_depth(d) {
                let back = decode_depth(code).unwrap();
                prop_assert!((back - d).abs() <= 1.0 / 512.0);
            } else {
                prop_assert!(d >= 65535.5 / 256.0);
            }
        }

        #[test]
        fn masking_is_a_subset(bits in prop::collection::vec(any::<bool>(), 24),
                               holes in prop::collection::vec(any::<bool>(), 24)) {
            let x = DepthGrid::from_fn(6, 4, |u, v| (!holes[v * 6 + u]).then_some(3.0)).unwrap().into_dense();
            let m = BinaryMask::new(6, 4, bits).unwrap();
            let s = apply_mask(&x, &m).unwrap();
            for (u, v, d) in s.iter_valid() {
                prop_assert!(m.get(u, v));
                prop_assert_eq!(Some(d), x.get(u, v));
            }
            let pc = mask_from_sparse(&s).popcount();
            prop_assert!(pc <= m.popcount());
            let covered = (0..24).all(|k| !m.bits()[k] || x.validity()[k]);
            prop_assert_eq!(pc == m.popcount(), covered);
        }
    }
}
