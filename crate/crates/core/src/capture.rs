//! Pushframe acquisition: the scene steps past a fixed column mask, each mask
//! column's light is summed onto one detector, and the per-exposure readings
//! are arranged into the staggered sample matrix `S`.
//!
//! With `K` pattern columns and a `w`-column scene there are `w + K − 1`
//! exposures. Under forward motion (scene moving from the last pattern column
//! towards the first) the reading of pattern `c` at exposure `t` lands in
//! `raw[t + c, c]` (zero-based), so row `K − 1 + j` of the raw matrix holds
//! every pattern's reading of scene column `j`. Scene columns outside the
//! frame are zero; the rows they touch are the ones [`SampleMatrix::crop`]
//! discards.

use ndarray::{s, Array2, ArrayView2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::{SensingPlan, SlmMask};

/// Relative motion of the scene across the mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanDirection {
    /// Scene moves from the last pattern column towards the first.
    #[default]
    Forward,
    /// Scene moves from the first pattern column towards the last; the raw
    /// matrix columns are flipped left-right so pattern `c` stays in column `c`.
    Reverse,
}

impl std::str::FromStr for ScanDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "forward" => Ok(Self::Forward),
            "reverse" => Ok(Self::Reverse),
            other => Err(Error::Config(format!("unknown scan direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CaptureConfig {
    pub direction: ScanDirection,
    /// Per-pattern-column optical gain (vignetting). `None` means ideal optics.
    pub gains: Option<Vec<f64>>,
    /// Standard deviation of additive Gaussian noise on each reading.
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

/// Readings of one exposure: `Σ_rows window ⊙ mask` per column, optionally
/// scaled by a per-column weight.
pub fn expose(window: ArrayView2<'_, f64>, mask: ArrayView2<'_, u8>, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    if window.dim() != mask.dim() {
        return Err(Error::Shape(format!(
            "scene window {:?} vs mask {:?}",
            window.dim(),
            mask.dim()
        )));
    }
    if let Some(w) = weights {
        if w.len() != mask.ncols() {
            return Err(Error::Shape(format!("{} weights for {} columns", w.len(), mask.ncols())));
        }
    }
    Ok((0..mask.ncols())
        .map(|c| {
            let sum: f64 = window
                .column(c)
                .iter()
                .zip(mask.column(c))
                .filter(|(_, &m)| m == 1)
                .map(|(&v, _)| v)
                .sum();
            weights.map_or(sum, |w| sum * w[c])
        })
        .collect())
}

/// Staggered `(2(K−1) + w) × K` matrix of readings; `None` marks unset cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    pub raw: Array2<Option<f64>>,
    pub scene_width: usize,
    pub direction: ScanDirection,
}

/// Simulates a full pass of `scene` under `slm`.
pub fn scan(scene: &Array2<f64>, slm: &SlmMask, cfg: &CaptureConfig) -> Result<SampleMatrix> {
    let (h, w) = scene.dim();
    if h != slm.height() {
        return Err(Error::Shape(format!("scene height {h} vs SLM height {}", slm.height())));
    }
    let k = slm.pattern_count();
    let mut padded = Array2::<f64>::zeros((h, w + 2 * (k - 1)));
    padded.slice_mut(s![.., k - 1..k - 1 + w]).assign(scene);

    let mut noise = (cfg.noise_sigma > 0.0).then(|| {
        (
            Xoshiro256PlusPlus::seed_from_u64(cfg.noise_seed),
            Normal::new(0.0, cfg.noise_sigma).expect("finite sigma"),
        )
    });

    let exposures = w + k - 1;
    let mut raw = Array2::from_elem((2 * (k - 1) + w, k), None);
    for t in 0..exposures {
        // Padded column seen by pattern 0 at this exposure.
        let first = match cfg.direction {
            ScanDirection::Forward => t,
            ScanDirection::Reverse => w + k - 2 - t,
        };
        let window = padded.slice(s![.., first..first + k]);
        let readings = expose(window, slm.cells().view(), cfg.gains.as_deref())?;
        for (c, mut v) in readings.into_iter().enumerate() {
            if let Some((rng, dist)) = noise.as_mut() {
                v += dist.sample(rng);
            }
            let row = match cfg.direction {
                ScanDirection::Forward => t + c,
                ScanDirection::Reverse => t + (k - 1 - c),
            };
            raw[[row, c]] = Some(v);
        }
    }
    Ok(SampleMatrix { raw, scene_width: w, direction: cfg.direction })
}

impl SampleMatrix {
    pub fn pattern_count(&self) -> usize {
        self.raw.ncols()
    }

    /// Keeps the `w` fully populated rows.
    pub fn crop(&self) -> Result<CroppedSamples> {
        let k = self.pattern_count();
        let w = self.scene_width;
        if self.raw.nrows() != 2 * (k - 1) + w {
            return Err(Error::Shape(format!(
                "raw matrix has {} rows, expected {}",
                self.raw.nrows(),
                2 * (k - 1) + w
            )));
        }
        let view = self.raw.slice(s![k - 1..k - 1 + w, ..]);
        let mut data = Array2::zeros((w, k));
        for ((i, j), v) in view.indexed_iter() {
            data[[i, j]] = v.ok_or_else(|| Error::ScanIncomplete(format!("cell ({}, {j}) unset", i + k - 1)))?;
        }
        Ok(CroppedSamples { data, direction: self.direction })
    }
}

/// Cropped sample matrix: `w × K`.
///
/// Row `i` holds the readings of the `i`-th scene column to cross the mask.
/// For forward scans that is scene column `i`; reverse scans traverse the
/// scene right to left, so row `i` is scene column `w − 1 − i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CroppedSamples {
    pub data: Array2<f64>,
    pub direction: ScanDirection,
}

impl CroppedSamples {
    pub fn width(&self) -> usize {
        self.data.nrows()
    }

    pub fn pattern_count(&self) -> usize {
        self.data.ncols()
    }

    /// Row of `data` holding scene column `j`.
    pub fn row_of(&self, j: usize) -> usize {
        match self.direction {
            ScanDirection::Forward => j,
            ScanDirection::Reverse => self.width() - 1 - j,
        }
    }

    /// Multiplies every pattern column by its flat-field weight.
    pub fn apply_flatfield(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.pattern_count() {
            return Err(Error::Shape(format!(
                "{} weights for {} pattern columns",
                weights.len(),
                self.pattern_count()
            )));
        }
        for mut row in self.data.rows_mut() {
            for (v, w) in row.iter_mut().zip(weights) {
                *v *= w;
            }
        }
        Ok(())
    }
}

/// Anything that can supply binary readings by scene column and pattern.
pub trait SampleSource {
    fn scene_width(&self) -> usize;
    fn reading(&self, scene_column: usize, pattern: usize) -> Option<f64>;
}

impl SampleSource for CroppedSamples {
    fn scene_width(&self) -> usize {
        self.width()
    }

    fn reading(&self, scene_column: usize, pattern: usize) -> Option<f64> {
        (pattern < self.pattern_count() && scene_column < self.width())
            .then(|| self.data[[self.row_of(scene_column), pattern]])
    }
}

/// `scan` followed by `crop`.
pub fn capture(scene: &Array2<f64>, slm: &SlmMask, cfg: &CaptureConfig) -> Result<CroppedSamples> {
    scan(scene, slm, cfg)?.crop()
}

/// Flat-field weights from a capture of a uniform white (intensity 1) scene:
/// `weight[c] = open_cells(c) / mean_j white[j, c]`.
pub fn flatfield(white: &CroppedSamples, slm: &SlmMask) -> Result<Vec<f64>> {
    if white.pattern_count() != slm.pattern_count() {
        return Err(Error::Shape("white capture and SLM differ in pattern count".into()));
    }
    (0..white.pattern_count())
        .map(|c| {
            let col = white.data.column(c);
            if col.iter().any(|&v| v <= 0.0) {
                return Err(Error::DegenerateCalibration(format!("pattern column {c} read zero on white")));
            }
            let mean = col.mean().expect("non-empty capture");
            Ok(slm.open_count(c) as f64 / mean)
        })
        .collect()
}

/// Complex measurement vector for the block of `width` scene columns starting
/// at `block_start`: column `k` of the block contributes its assigned rows,
/// recovered from the binary readings through the plan's recovery map.
pub fn to_complex(
    samples: &impl SampleSource,
    plan: &SensingPlan,
    block_start: usize,
    width: usize,
) -> Result<Vec<Complex64>> {
    if width == 0 || width > plan.b() || block_start + width > samples.scene_width() {
        return Err(Error::Shape(format!(
            "block [{block_start}, {}) outside {} columns or wider than b = {}",
            block_start + width,
            samples.scene_width(),
            plan.b()
        )));
    }
    let ones = plan.ones_pattern();
    let mut out = Vec::with_capacity(width * plan.m());
    for k in 0..width {
        let j = block_start + k;
        let s1 = samples
            .reading(j, ones)
            .ok_or_else(|| Error::Conversion(format!("scene column {j} lacks the all-ones reading")))?;
        for &row in plan.assignment(k) {
            let t = plan.recovery(row);
            let get = |p: usize| {
                samples
                    .reading(j, p)
                    .ok_or_else(|| Error::Conversion(format!("scene column {j} lacks pattern {p}")))
            };
            out.push(t.apply(get(t.pattern_a)?, get(t.pattern_b)?, s1));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::Ordering;
    use crate::raster::{mirror_columns, to_column_major};
    use rand::Rng;

    fn random_mask(rng: &mut impl Rng, h: usize, k: usize) -> SlmMask {
        SlmMask::from_columns(Array2::from_shape_fn((h, k), |_| rng.gen_range(0..2u8))).unwrap()
    }

    /// Brute-force capture with one-based indices, straight from the stencil.
    fn stencil_oracle(x: &Array2<f64>, mask: &SlmMask) -> Array2<Option<f64>> {
        let (h, w) = x.dim();
        let k = mask.pattern_count();
        let m = k - 1;
        let mut raw = Array2::from_elem((2 * m + w, k), None);
        for t in 1..=m + w {
            for c in 1..=k {
                let j = t as isize + c as isize - k as isize;
                let mut v = 0.0;
                if j >= 1 && j <= w as isize {
                    for i in 0..h {
                        v += x[[i, j as usize - 1]] * mask.cells()[[i, c - 1]] as f64;
                    }
                }
                raw[[t + c - 2, c - 1]] = Some(v);
            }
        }
        raw
    }

    #[test]
    fn expose_full_and_empty_masks() {
        let scene = Array2::from_elem((256, 3), 0.25);
        let ones = Array2::<u8>::ones((256, 3));
        let v = expose(scene.view(), ones.view(), None).unwrap();
        assert!(v.iter().all(|&c| c == 64.0));
        let zeros = Array2::<u8>::zeros((256, 3));
        assert!(expose(scene.view(), zeros.view(), None).unwrap().iter().all(|&c| c == 0.0));
        assert!(matches!(expose(scene.view(), ones.slice(s![.., ..2]), None), Err(Error::Shape(_))));
    }

    #[test]
    fn expose_matches_direct_dot_products() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
        let scene = Array2::from_shape_fn((8, 4), |_| rng.gen_range(0.0..1.0));
        let mask = random_mask(&mut rng, 8, 4);
        let v = expose(scene.view(), mask.cells().view(), None).unwrap();
        for c in 0..4 {
            let want: f64 = (0..8).map(|i| scene[[i, c]] * mask.cells()[[i, c]] as f64).sum();
            assert!((v[c] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn scan_matches_stencil_and_crops_expected_rows() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
        for w in [3, 5, 8] {
            let x = Array2::from_shape_fn((6, w), |_| rng.gen_range(0..10) as f64);
            let mask = random_mask(&mut rng, 6, 5);
            let sm = scan(&x, &mask, &CaptureConfig::default()).unwrap();
            let oracle = stencil_oracle(&x, &mask);
            assert_eq!(sm.raw.dim(), (8 + w, 5));
            for ((r, c), v) in sm.raw.indexed_iter() {
                // The simulation fills zero-padded cells the stencil leaves blank.
                let in_stencil = r >= c && r - c < 4 + w;
                if in_stencil {
                    assert_eq!(*v, oracle[[r, c]]);
                } else {
                    assert_eq!(*v, None);
                }
            }
            let cropped = sm.crop().unwrap();
            assert_eq!(cropped.width(), w);
            // One-based raw rows 5..=4+w survive.
            for i in 0..w {
                for c in 0..5 {
                    assert_eq!(Some(cropped.data[[i, c]]), oracle[[i + 4, c]]);
                }
            }
        }
    }

    #[test]
    fn single_column_scene_gives_dot_products() {
        let x = Array2::from_shape_fn((4, 1), |(i, _)| i as f64 + 1.0);
        let mask = SlmMask::from_columns(ndarray::array![[1, 0, 1], [1, 1, 1], [0, 1, 1], [0, 0, 1]]).unwrap();
        let s = capture(&x, &mask, &CaptureConfig::default()).unwrap();
        assert_eq!(s.data.row(0).to_vec(), vec![3.0, 5.0, 10.0]);
    }

    #[test]
    fn reverse_scan_equals_forward_scan_of_mirror() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(6);
        let x = Array2::from_shape_fn((6, 7), |_| rng.gen_range(0..10) as f64);
        let mask = random_mask(&mut rng, 6, 5);
        let rev = CaptureConfig { direction: ScanDirection::Reverse, ..Default::default() };
        let a = capture(&x, &mask, &rev).unwrap();
        let b = capture(&mirror_columns(&x), &mask, &CaptureConfig::default()).unwrap();
        assert_eq!(a.data, b.data);
        // Scene-space lookup undoes the mirror.
        let f = capture(&x, &mask, &CaptureConfig::default()).unwrap();
        for j in 0..7 {
            for c in 0..5 {
                assert_eq!(a.reading(j, c), f.reading(j, c));
            }
        }
    }

    #[test]
    fn crop_rejects_incomplete_scan() {
        let mut x = SampleMatrix { raw: Array2::from_elem((7, 3), Some(1.0)), scene_width: 3, direction: ScanDirection::Forward };
        x.raw[[3, 1]] = None;
        assert!(matches!(x.crop(), Err(Error::ScanIncomplete(_))));
    }

    #[test]
    fn flatfield_ideal_and_vignetted() {
        let plan = SensingPlan::pooled(16, 16, 1, 0, Ordering::Mirrored).unwrap();
        let white = Array2::from_elem((16, 4), 1.0);
        let ideal = capture(&white, plan.slm(), &CaptureConfig::default()).unwrap();
        let w = flatfield(&ideal, plan.slm()).unwrap();
        assert!(w.iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let gains: Vec<f64> = (0..17).map(|c| 1.0 - 0.4 * (c as f64 / 16.0 - 0.5).powi(2)).collect();
        let vign = CaptureConfig { gains: Some(gains.clone()), ..Default::default() };
        let white_v = capture(&white, plan.slm(), &vign).unwrap();
        let weights = flatfield(&white_v, plan.slm()).unwrap();
        for (wt, g) in weights.iter().zip(&gains) {
            assert!((wt - 1.0 / g).abs() < 1e-12);
        }
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
        let scene = Array2::from_shape_fn((16, 9), |_| rng.gen_range(0.0..1.0));
        let mut corrected = capture(&scene, plan.slm(), &vign).unwrap();
        corrected.apply_flatfield(&weights).unwrap();
        let truth = capture(&scene, plan.slm(), &CaptureConfig::default()).unwrap();
        for (a, b) in corrected.data.iter().zip(truth.data.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn flatfield_rejects_dark_columns() {
        let mask = SlmMask::from_columns(ndarray::array![[1, 0], [1, 0]]).unwrap();
        let white = capture(&Array2::from_elem((2, 3), 1.0), &mask, &CaptureConfig::default()).unwrap();
        assert!(matches!(flatfield(&white, &mask), Err(Error::DegenerateCalibration(_))));
    }

    #[test]
    fn conversion_matches_block_operator() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(12);
        for n in [8, 16] {
            for (m, b) in [(n / 2, 1), (n / 4 * 2, 3), (n, 2)] {
                let plan = SensingPlan::pooled(n, m, b, 3, Ordering::Mirrored).unwrap();
                let x = Array2::from_shape_fn((n, 7), |_| rng.gen_range(0.0..1.0));
                for dir in [ScanDirection::Forward, ScanDirection::Reverse] {
                    let cfg = CaptureConfig { direction: dir, ..Default::default() };
                    let s = capture(&x, plan.slm(), &cfg).unwrap();
                    let mut j = 0;
                    while j < 7 {
                        let width = b.min(7 - j);
                        let y = to_complex(&s, &plan, j, width).unwrap();
                        let want = plan.block_operator(width).apply(&to_column_major(&x, j, width));
                        for (a, b) in y.iter().zip(&want) {
                            assert!((a - b).norm() < 1e-8);
                        }
                        j += width;
                    }
                }
            }
        }
    }

    #[test]
    fn full_rate_conversion_is_the_transform_and_zero_scene_is_zero() {
        let plan = SensingPlan::pooled(16, 16, 1, 0, Ordering::Pastuszczak).unwrap();
        let x = Array2::from_shape_fn((16, 2), |(i, j)| ((i + 3 * j) % 5) as f64 / 4.0);
        let s = capture(&x, plan.slm(), &CaptureConfig::default()).unwrap();
        let y = to_complex(&s, &plan, 1, 1).unwrap();
        let col: Vec<Complex64> = x.column(1).iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let want = crate::noiselet::fast_noiselet(&col, crate::noiselet::Direction::Forward).unwrap();
        for (a, b) in y.iter().zip(&want) {
            assert!((a - b).norm() < 1e-10);
        }
        let zero = capture(&Array2::zeros((16, 2)), plan.slm(), &CaptureConfig::default()).unwrap();
        assert!(to_complex(&zero, &plan, 0, 1).unwrap().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn missing_ones_reading_is_a_conversion_error() {
        let plan = SensingPlan::pooled(8, 4, 1, 0, Ordering::Mirrored).unwrap();
        let s = CroppedSamples { data: Array2::zeros((2, 8)), direction: ScanDirection::Forward };
        assert!(matches!(to_complex(&s, &plan, 0, 1), Err(Error::Conversion(_))));
    }

    #[test]
    fn readings_stay_within_physical_range() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
        let plan = SensingPlan::pooled(32, 32, 1, 0, Ordering::Mirrored).unwrap();
        let x = Array2::from_shape_fn((32, 10), |_| rng.gen_range(0.0..=1.0));
        let sm = scan(&x, plan.slm(), &CaptureConfig::default()).unwrap();
        assert!(sm.raw.iter().flatten().all(|&v| (0.0..=32.0).contains(&v)));
    }

    #[test]
    fn noise_is_seeded() {
        let plan = SensingPlan::pooled(8, 8, 1, 0, Ordering::Mirrored).unwrap();
        let x = Array2::from_elem((8, 3), 0.5);
        let cfg = CaptureConfig { noise_sigma: 0.1, noise_seed: 4, ..Default::default() };
        let a = capture(&x, plan.slm(), &cfg).unwrap();
        assert_eq!(a, capture(&x, plan.slm(), &cfg).unwrap());
        assert_ne!(a, capture(&x, plan.slm(), &CaptureConfig::default()).unwrap());
    }
}
