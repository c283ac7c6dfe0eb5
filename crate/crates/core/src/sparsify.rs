//! Dense-to-sparse sampling: i.i.d. Bernoulli or transfer of a LiDAR
//! validity mask.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::depth_image::{apply_mask, BinaryMask, DenseDepthMap, DepthGrid, Provenance, SparseDepthMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliConfig {
    pub keep_probability: f64,
    pub seed: u64,
}

impl BernoulliConfig {
    pub fn new(keep_probability: f64, seed: u64) -> Result<Self> {
        if !(keep_probability > 0.0 && keep_probability <= 1.0) {
            return Err(Error::Config(format!(
                "keep probability {keep_probability} outside (0, 1]"
            )));
        }
        Ok(BernoulliConfig {
            keep_probability,
            seed,
        })
    }
}

/// Keeps each valid pixel independently with probability `p_B`.
pub fn sparsify_bernoulli(x: &DenseDepthMap, cfg: &BernoulliConfig) -> SparseDepthMap {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = DepthGrid::new(x.width(), x.height());
    for (u, v, d) in x.iter_valid() {
        if rng.random::<f64>() < cfg.keep_probability {
            out.set(u, v, Some(d)).expect("copied from a valid map");
        }
    }
    out.into_sparse(Provenance::Bernoulli)
}

/// Real LiDAR validity patterns, all with the same dimensions.
#[derive(Debug, Clone)]
pub struct MaskBank {
    masks: Vec<BinaryMask>,
}

impl MaskBank {
    pub fn new(masks: Vec<BinaryMask>) -> Result<Self> {
        let first = masks
            .first()
            .ok_or_else(|| Error::Config("mask bank is empty".into()))?
            .dims();
        if let Some(m) = masks.iter().find(|m| m.dims() != first) {
            return Err(Error::DimensionMismatch {
                expected: first,
                actual: m.dims(),
            });
        }
        Ok(MaskBank { masks })
    }

    /// Loads every `*.png` in `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        paths.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")));
        paths.sort();
        let masks = paths
            .iter()
            .map(|p| BinaryMask::read_png(p))
            .collect::<Result<Vec<_>>>()?;
        Self::new(masks)
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.masks[0].dims()
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }
}

/// Applies a mask drawn uniformly (with replacement) from `bank`. Returns the
/// sparse map and the index of the mask used.
pub fn sparsify_with_mask(x: &DenseDepthMap, bank: &MaskBank, seed: u64) -> Result<(SparseDepthMap, usize)> {
    x.ensure_dims(bank.dims())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = rng.random_range(0..bank.len());
    Ok((apply_mask(x, &bank.masks[id])?, id))
}

/// Parameters of a synthetic scanning-LiDAR mask: horizontal scanlines every
/// `row_spacing` rows, each keeping a column with probability `column_keep`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanlineMaskConfig {
    pub width: usize,
    pub height: usize,
    pub row_spacing: usize,
    pub column_keep: f64,
}

impl ScanlineMaskConfig {
    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.row_spacing == 0 {
            return Err(Error::Config("scanline mask needs non-zero size and spacing".into()));
        }
        if !(self.column_keep > 0.0 && self.column_keep <= 1.0) {
            return Err(Error::Config(format!(
                "column keep probability {} outside (0, 1]",
                self.column_keep
            )));
        }
        Ok(())
    }
}

/// Stand-in for real LiDAR masks when none are available locally. The
/// scanline phase is random per mask.
pub fn scanline_mask(cfg: &ScanlineMaskConfig, seed: u64) -> Result<BinaryMask> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.random_range(0..cfg.row_spacing);
    let mut bits = vec![false; cfg.width * cfg.height];
    for v in (phase..cfg.height).step_by(cfg.row_spacing) {
        for u in 0..cfg.width {
            bits[v * cfg.width + u] = rng.random::<f64>() < cfg.column_keep;
        }
    }
    BinaryMask::new(cfg.width, cfg.height, bits)
}

pub fn scanline_bank(cfg: &ScanlineMaskConfig, count: usize, seed: u64) -> Result<MaskBank> {
    let masks = (0..count as u64)
        .map(|i| scanline_mask(cfg, seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i)))
        .collect::<Result<Vec<_>>>()?;
    MaskBank::new(masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth_image::mask_from_sparse;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> DenseDepthMap {
        DepthGrid::from_fn(w, h, |u, v| ((u + v) % 11 != 0).then(|| 1.0 + 0.01 * (u * h + v) as f64))
            .unwrap()
            .into_dense()
    }

    #[test]
    fn bernoulli_keep_all() {
        let x = ramp(30, 20);
        let s = sparsify_bernoulli(&x, &BernoulliConfig::new(1.0, 4).unwrap());
        assert_eq!(s.validity(), x.validity());
        assert_eq!(s.values(), x.values());
        assert_eq!(s.provenance(), Provenance::Bernoulli);
    }

    #[test]
    fn bernoulli_rate_and_determinism() {
        let x = DepthGrid::from_fn(1000, 1000, |_, _| Some(5.0)).unwrap().into_dense();
        let cfg = BernoulliConfig::new(0.1, 42).unwrap();
        let s = sparsify_bernoulli(&x, &cfg);
        let frac = s.valid_fraction();
        assert!((0.097..=0.103).contains(&frac), "kept fraction {frac}");
        assert_eq!(s, sparsify_bernoulli(&x, &cfg));
    }

    #[test]
    fn bernoulli_config_bounds() {
        assert!(BernoulliConfig::new(0.0, 0).is_err());
        assert!(BernoulliConfig::new(1.5, 0).is_err());
        assert!(BernoulliConfig::new(f64::NAN, 0).is_err());
    }

    #[test]
    fn single_mask_bank() {
        let x = ramp(12, 8);
        let m = BinaryMask::from_fn(12, 8, |u, v| (u * v) % 3 == 1);
        let bank = MaskBank::new(vec![m.clone()]).unwrap();
        for seed in 0..20 {
            let (s, id) = sparsify_with_mask(&x, &bank, seed).unwrap();
            assert_eq!(id, 0);
            assert_eq!(s.provenance(), Provenance::Masked);
            assert!(s.iter_valid().all(|(u, v, _)| m.get(u, v)));
        }
    }

    #[test]
    fn mask_draws_are_uniform() {
        let k = 4usize;
        let n = 4000usize;
        let masks = (0..k).map(|i| BinaryMask::from_fn(3, 3, |u, _| u == i % 3)).collect();
        let bank = MaskBank::new(masks).unwrap();
        let x = ramp(3, 3);
        let mut counts = vec![0usize; k];
        for seed in 0..n as u64 {
            counts[sparsify_with_mask(&x, &bank, seed).unwrap().1] += 1;
        }
        let p = 1.0 / k as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn bank_validation() {
        assert!(MaskBank::new(vec![]).is_err());
        let a = BinaryMask::filled(3, 2, true);
        let b = BinaryMask::filled(2, 3, true);
        assert!(MaskBank::new(vec![a.clone(), b]).is_err());
        let bank = MaskBank::new(vec![a]).unwrap();
        assert!(sparsify_with_mask(&ramp(4, 4), &bank, 0).is_err());
    }

    #[test]
    fn bank_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScanlineMaskConfig {
            width: 40,
            height: 16,
            row_spacing: 4,
            column_keep: 0.5,
        };
        let bank = scanline_bank(&cfg, 3, 1).unwrap();
        for (i, m) in bank.masks().iter().enumerate() {
            m.write_png(&dir.path().join(format!("{i:03}.png"))).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let loaded = MaskBank::load_dir(dir.path()).unwrap();
        assert_eq!(loaded.masks(), bank.masks());
    }

    #[test]
    fn scanline_rows() {
        let cfg = ScanlineMaskConfig {
            width: 100,
            height: 40,
            row_spacing: 4,
            column_keep: 1.0,
        };
        let m = scanline_mask(&cfg, 3).unwrap();
        let rows: Vec<_> = m.row_counts().iter().map(|&c| c > 0).collect();
        assert_eq!(rows.iter().filter(|&&r| r).count(), 10);
        assert_eq!(m.popcount(), 1000);
    }

    proptest! {
        #[test]
        fn sparsification_only_drops(p in 0.01f64..=1.0, seed in any::<u64>(),
                                     bits in prop::collection::vec(any::<bool>(), 20 * 9)) {
            let x = ramp(20, 9);
            let s = sparsify_bernoulli(&x, &BernoulliConfig::new(p, seed).unwrap());
            for (u, v, d) in s.iter_valid() {
                prop_assert_eq!(x.get(u, v), Some(d));
            }
            let m = BinaryMask::new(20, 9, bits).unwrap();
            let bank = MaskBank::new(vec![m.clone()]).unwrap();
            let (s, _) = sparsify_with_mask(&x, &bank, seed).unwrap();
            for (u, v, d) in s.iter_valid() {
                prop_assert_eq!(x.get(u, v), Some(d));
            }
            let expected: Vec<usize> = (0..9)
                .map(|v| (0..20).filter(|&u| m.get(u, v) && x.get(u, v).is_some()).count())
                .collect();
            prop_assert_eq!(mask_from_sparse(&s).row_counts(), expected);
        }
    }
}
