//! Colour capture with a synthesized panchromatic band.
//!
//! Every band is captured at the full row count. Compression happens at
//! retention time: the pan band keeps `m_pan` rows, each colour band keeps
//! `m_band`, and the pan reconstruction restores detail to the colour bands
//! by intensity substitution.

use ndarray::Array2;

use crate::capture::{capture, CaptureConfig, CroppedSamples, SampleSource};
use crate::error::{Error, Result};
use crate::plan::SensingPlan;
use crate::raster::Image;

/// Elementwise mean of three band captures.
pub fn synthesize_pan(r: &CroppedSamples, g: &CroppedSamples, b: &CroppedSamples) -> Result<CroppedSamples> {
    if r.data.dim() != g.data.dim() || r.data.dim() != b.data.dim() {
        return Err(Error::Shape("band sample matrices differ in size".into()));
    }
    if r.direction != g.direction || r.direction != b.direction {
        return Err(Error::Shape("band captures differ in scan direction".into()));
    }
    Ok(CroppedSamples { data: (&r.data + &g.data + &b.data) / 3.0, direction: r.direction })
}

/// Full-rate captures of R, G, B plus the synthesized pan band.
#[derive(Debug, Clone)]
pub struct BandSamples {
    pub bands: [CroppedSamples; 3],
    pub pan: CroppedSamples,
}

impl BandSamples {
    pub fn capture(scene: &Image, plan: &SensingPlan, cfg: &CaptureConfig) -> Result<Self> {
        if scene.band_count() != 3 {
            return Err(Error::Shape(format!("{} bands; colour capture needs 3", scene.band_count())));
        }
        let one = |i: usize| capture(scene.band(i), plan.slm(), cfg);
        let bands = [one(0)?, one(1)?, one(2)?];
        let pan = synthesize_pan(&bands[0], &bands[1], &bands[2])?;
        Ok(Self { bands, pan })
    }
}

/// View of a capture restricted to the pattern columns a reduced plan uses.
/// Scene column `j` keeps the patterns of assignment `j mod b`.
#[derive(Debug, Clone)]
pub struct RetainedSamples<'s> {
    base: &'s CroppedSamples,
    keep: Vec<Vec<bool>>,
}

impl RetainedSamples<'_> {
    /// Retained pattern columns of scene column `j`.
    pub fn patterns(&self, j: usize) -> Vec<usize> {
        let keep = &self.keep[j % self.keep.len()];
        (0..keep.len()).filter(|&p| keep[p]).collect()
    }
}

impl SampleSource for RetainedSamples<'_> {
    fn scene_width(&self) -> usize {
        self.base.scene_width()
    }

    fn reading(&self, scene_column: usize, pattern: usize) -> Option<f64> {
        let keep = &self.keep[scene_column % self.keep.len()];
        if keep.get(pattern).copied().unwrap_or(false) {
            self.base.reading(scene_column, pattern)
        } else {
            None
        }
    }
}

/// Keeps `k` complex rows per column, drawn with the plan's seed and block
/// width, plus the all-ones reading. Returns the reduced plan that decodes
/// the retained samples.
pub fn retain<'s>(samples: &'s CroppedSamples, k: usize, plan: &SensingPlan) -> Result<(SensingPlan, RetainedSamples<'s>)> {
    if samples.pattern_count() != plan.slm().pattern_count() {
        return Err(Error::Shape(format!(
            "{} sample columns vs {} SLM patterns",
            samples.pattern_count(),
            plan.slm().pattern_count()
        )));
    }
    let reduced = plan.with_rows(k, plan.b())?;
    let keep = (0..reduced.b())
        .map(|c| {
            let mut mask = vec![false; samples.pattern_count()];
            for p in reduced.retained_patterns(c) {
                mask[p] = true;
            }
            mask
        })
        .collect();
    Ok((reduced, RetainedSamples { base: samples, keep }))
}

/// Intensity substitution: `band' = clamp(band + I_pan − mean(bands))`.
pub fn ihs_sharpen(pan: &Array2<f64>, r: &Array2<f64>, g: &Array2<f64>, b: &Array2<f64>) -> Result<[Array2<f64>; 3]> {
    let dims = pan.dim();
    if r.dim() != dims || g.dim() != dims || b.dim() != dims {
        return Err(Error::Shape("pan and colour bands differ in size".into()));
    }
    let delta = pan - &((r + g + b) / 3.0);
    let sharpen = |band: &Array2<f64>| (band + &delta).mapv(|v| v.clamp(0.0, 1.0));
    Ok([sharpen(r), sharpen(g), sharpen(b)])
}

/// Per-band-equivalent row count `m_pan/3 + m_band`.
pub fn effective_rate(m_pan: usize, m_band: usize) -> f64 {
    m_pan as f64 / 3.0 + m_band as f64
}

/// Largest even band row count keeping `m_pan/3 + m_band ≤ mbar`; `None`
/// when fewer than two rows would remain.
pub fn band_rows_for(mbar: f64, m_pan: usize) -> Option<usize> {
    let room = mbar - m_pan as f64 / 3.0;
    if room < 2.0 {
        return None;
    }
    Some(2 * (room / 2.0 + 1e-9).floor() as usize)
}
