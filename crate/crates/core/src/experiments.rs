//! Parameter sweeps over rate, block width and assignment method, and the
//! pan-sharpening comparison.
//!
//! Scenes are captured once at the full row count; each configuration then
//! decodes only the readings its plan uses, which is how retention works on
//! a real capture too.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capture::{capture, CaptureConfig};
use crate::error::{Error, Result};
use crate::metrics::QualityReport;
use crate::multispectral::{band_rows_for, ihs_sharpen, retain, BandSamples};
use crate::plan::{rows_for_rate, Ordering, SensingPlan};
use crate::raster::Image;
use crate::recon::{reconstruct_image, ReconConfig};

/// Row assignment policy across a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Every column draws its own rows from the shared pool.
    Pooled,
    /// Every column repeats the first column's rows.
    Naive,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pooled" => Ok(Self::Pooled),
            "naive" => Ok(Self::Naive),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub rates: Vec<f64>,
    pub block_widths: Vec<usize>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub ordering: Ordering,
    /// Solver settings; the block width is filled in per run.
    pub recon: ReconConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            rates: vec![0.1, 0.2, 0.4, 0.6, 0.8, 1.0],
            block_widths: vec![1, 4, 16],
            methods: vec![Method::Pooled, Method::Naive],
            seed: 1,
            ordering: Ordering::Mirrored,
            recon: ReconConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rate: f64,
    pub b: usize,
    pub method: Method,
    pub m: usize,
    pub psnr_db: f64,
    pub ssim: f64,
    pub converged: bool,
    pub wall_time_s: f64,
}

/// Reconstructs `scene` for every (rate, b, method) combination.
pub fn mono_sweep(scene: &Array2<f64>, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    let n = scene.nrows();
    let full = SensingPlan::pooled(n, n, 1, cfg.seed, cfg.ordering)?;
    let samples = capture(scene, full.slm(), &CaptureConfig::default())?;
    let truth = Image::mono(scene.clone());
    let mut rows = Vec::new();
    for &rate in &cfg.rates {
        let m = rows_for_rate(n, rate);
        for &b in &cfg.block_widths {
            for &method in &cfg.methods {
                let plan = SensingPlan::new(n, m, b, cfg.seed, cfg.ordering, method == Method::Naive)?;
                let rc = ReconConfig { b, ..cfg.recon.clone() };
                let (out, report) = reconstruct_image(&samples, &plan, &rc)?;
                let q = QualityReport::compare(&truth, &Image::mono(out))?;
                rows.push(SweepRow {
                    rate,
                    b,
                    method,
                    m,
                    psnr_db: q.psnr_db,
                    ssim: q.ssim,
                    converged: report.all_converged,
                    wall_time_s: report.wall_time_s,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanConfig {
    /// Effective rates (fractions of n) compared against independent RGB.
    pub mbar_rates: Vec<f64>,
    /// Pan retention grid, as fractions of n.
    pub pan_fractions: Vec<f64>,
    /// Extra effective rates at which the pan route is evaluated so the
    /// matching-quality rate can be interpolated.
    pub curve_rates: Vec<f64>,
    pub b: usize,
    pub seed: u64,
    pub ordering: Ordering,
    pub recon: ReconConfig,
}

impl Default for PanConfig {
    fn default() -> Self {
        Self {
            mbar_rates: vec![0.15, 0.25, 0.4],
            pan_fractions: vec![0.25, 0.5, 0.75, 1.0],
            curve_rates: vec![0.1, 0.125, 0.175, 0.2, 0.3, 0.35],
            b: 256,
            seed: 1,
            ordering: Ordering::Mirrored,
            recon: ReconConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Independent,
    Pan,
}

/// One evaluated configuration. `mbar` is in rows per band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanRow {
    pub route: Route,
    pub mbar_rate: f64,
    pub mbar: f64,
    pub m_pan: usize,
    pub m_band: usize,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// How much of the independent route's budget the pan route needs for the
/// same SSIM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionRow {
    pub mbar_rate: f64,
    pub independent_mbar: f64,
    pub independent_ssim: f64,
    pub best_pan_ssim: f64,
    /// Interpolated budget at which the pan curve reaches the independent SSIM.
    pub matched_mbar: Option<f64>,
    pub fraction: Option<f64>,
    /// The pan curve already exceeds the target at its lowest evaluated
    /// budget, so `fraction` is an upper bound.
    pub upper_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanResult {
    pub rows: Vec<PanRow>,
    pub fractions: Vec<FractionRow>,
}

impl PanResult {
    pub fn independent(&self, mbar_rate: f64) -> Option<&PanRow> {
        self.rows.iter().find(|r| r.route == Route::Independent && r.mbar_rate == mbar_rate)
    }

    /// Best pan-sharpened row at an effective rate.
    pub fn best_pan(&self, mbar_rate: f64) -> Option<&PanRow> {
        self.rows
            .iter()
            .filter(|r| r.route == Route::Pan && r.mbar_rate == mbar_rate)
            .max_by(|a, b| a.ssim.total_cmp(&b.ssim))
    }
}

/// Which image a cached solve belongs to: colour band 0..3 or the pan band.
type SolveKey = (usize, usize);
const PAN: usize = 3;

/// Compares independent colour recovery with pan-sharpened recovery.
pub fn pan_experiment(scene: &Image, cfg: &PanConfig) -> Result<PanResult> {
    if scene.band_count() != 3 {
        return Err(Error::Shape("pan experiment needs a colour scene".into()));
    }
    let n = scene.height();
    let full = SensingPlan::pooled(n, n, cfg.b, cfg.seed, cfg.ordering)?;
    let samples = BandSamples::capture(scene, &full, &CaptureConfig::default())?;
    let rc = ReconConfig { b: cfg.b, ..cfg.recon.clone() };

    let mut rates: Vec<f64> = cfg.mbar_rates.iter().chain(&cfg.curve_rates).copied().collect();
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    let pan_rows: Vec<usize> = cfg.pan_fractions.iter().map(|&f| rows_for_rate(n, f)).collect();

    // (rate, m_pan, m_band) combinations for the pan route.
    let mut combos = Vec::new();
    for &rate in &rates {
        let mbar = rows_for_rate(n, rate) as f64;
        for &m_pan in &pan_rows {
            if let Some(m_band) = band_rows_for(mbar, m_pan) {
                combos.push((rate, m_pan, m_band));
            }
        }
    }

    let mut keys = BTreeSet::<SolveKey>::new();
    for &rate in &cfg.mbar_rates {
        let m = rows_for_rate(n, rate);
        keys.extend((0..3).map(|c| (c, m)));
    }
    for &(_, m_pan, m_band) in &combos {
        keys.insert((PAN, m_pan));
        keys.extend((0..3).map(|c| (c, m_band)));
    }
    let solved: BTreeMap<SolveKey, Array2<f64>> = keys
        .into_par_iter()
        .map(|(channel, m)| {
            let source = if channel == PAN { &samples.pan } else { &samples.bands[channel] };
            let (plan, kept) = retain(source, m, &full)?;
            Ok(((channel, m), reconstruct_image(&kept, &plan, &rc)?.0))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &rate in &cfg.mbar_rates {
        let m = rows_for_rate(n, rate);
        let img = Image::from_bands((0..3).map(|c| solved[&(c, m)].clone()).collect())?;
        let q = QualityReport::compare(scene, &img)?;
        rows.push(PanRow {
            route: Route::Independent,
            mbar_rate: rate,
            mbar: m as f64,
            m_pan: 0,
            m_band: m,
            psnr_db: q.psnr_db,
            ssim: q.ssim,
        });
    }
    for &(rate, m_pan, m_band) in &combos {
        let band = |c: usize| &solved[&(c, m_band)];
        let [r, g, b] = ihs_sharpen(&solved[&(PAN, m_pan)], band(0), band(1), band(2))?;
        let q = QualityReport::compare(scene, &Image::rgb(r, g, b)?)?;
        rows.push(PanRow {
            route: Route::Pan,
            mbar_rate: rate,
            mbar: crate::multispectral::effective_rate(m_pan, m_band),
            m_pan,
            m_band,
            psnr_db: q.psnr_db,
            ssim: q.ssim,
        });
    }

    let mut result = PanResult { rows, fractions: Vec::new() };
    let curve: Vec<(f64, f64)> = rates
        .iter()
        .filter_map(|&r| result.best_pan(r).map(|row| (rows_for_rate(n, r) as f64, row.ssim)))
        .collect();
    for &rate in &cfg.mbar_rates {
        let ind = result.independent(rate).expect("independent row per rate").clone();
        let best = result.best_pan(rate).map_or(f64::NAN, |r| r.ssim);
        let (matched, upper_bound) = match_budget(&curve, ind.ssim);
        result.fractions.push(FractionRow {
            mbar_rate: rate,
            independent_mbar: ind.mbar,
            independent_ssim: ind.ssim,
            best_pan_ssim: best,
            matched_mbar: matched,
            fraction: matched.map(|m| m / ind.mbar),
            upper_bound,
        });
    }
    Ok(result)
}

/// First budget along `curve` (sorted by budget) where the quality reaches
/// `target`, linearly interpolated between evaluated points.
pub fn match_budget(curve: &[(f64, f64)], target: f64) -> (Option<f64>, bool) {
    match curve.first() {
        None => return (None, false),
        Some(&(m0, s0)) if s0 >= target => return (Some(m0), true),
        _ => {}
    }
    for w in curve.windows(2) {
        let ((m0, s0), (m1, s1)) = (w[0], w[1]);
        if s0 < target && s1 >= target {
            return (Some(m0 + (target - s0) / (s1 - s0) * (m1 - m0)), false);
        }
    }
    (None, false)
}

/// Writes serializable rows as CSV with a header.
pub fn write_rows<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
