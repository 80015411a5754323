//! PSNR and SSIM.
//!
//! SSIM uses an 11×11 Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03 and a
//! dynamic range of 1, with population (not sample) covariances. The local
//! map is averaged over positions where the window fits entirely inside the
//! image. Colour images score the mean of their per-band values.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// `+∞` for identical images (serialized as `null`).
    pub psnr_db: f64,
    pub ssim: f64,
}

impl QualityReport {
    pub fn compare(a: &Image, b: &Image) -> Result<Self> {
        Ok(Self { psnr_db: psnr(a, b, 1.0)?, ssim: ssim(a, b)? })
    }
}

fn same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.band_count() != b.band_count() || a.height() != b.height() || a.width() != b.width() {
        return Err(Error::Shape(format!(
            "{}×{}×{} vs {}×{}×{}",
            a.height(),
            a.width(),
            a.band_count(),
            b.height(),
            b.width(),
            b.band_count()
        )));
    }
    Ok(())
}

/// `10·log10(peak² / MSE)` over all pixels of all bands.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    same_shape(a, b)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, q) in a.bands().iter().zip(b.bands()) {
        sum += p.iter().zip(q.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        count += p.len();
    }
    let mse = sum / count as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (peak * peak / mse).log10() })
}

/// Mean SSIM; per-band mean for colour images.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    let mut total = 0.0;
    for (p, q) in a.bands().iter().zip(b.bands()) {
        total += ssim_band(p, q)?;
    }
    Ok(total / a.band_count() as f64)
}

/// Normalized 1-D Gaussian taps for the SSIM window.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut t = [0.0; SSIM_WINDOW];
    for (i, v) in t.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-0.5 * d * d / (SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = t.iter().sum();
    t.iter_mut().for_each(|v| *v /= s);
    t
}

/// Separable Gaussian filter keeping only fully supported positions.
fn filter_valid(x: &Array2<f64>, taps: &[f64; SSIM_WINDOW]) -> Array2<f64> {
    let (h, w) = x.dim();
    let (vh, vw) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = Array2::<f64>::zeros((h, vw));
    for i in 0..h {
        for j in 0..vw {
            rows[[i, j]] = taps.iter().enumerate().map(|(t, &g)| g * x[[i, j + t]]).sum::<f64>();
        }
    }
    let mut out = Array2::<f64>::zeros((vh, vw));
    for i in 0..vh {
        for j in 0..vw {
            out[[i, j]] = taps.iter().enumerate().map(|(t, &g)| g * rows[[i + t, j]]).sum::<f64>();
        }
    }
    out
}

pub fn ssim_band(x: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", x.dim(), y.dim())));
    }
    let (h, w) = x.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape(format!("{h}×{w} image is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} window")));
    }
    let taps = gaussian_taps();
    let ux = filter_valid(x, &taps);
    let uy = filter_valid(y, &taps);
    let uxx = filter_valid(&(x * x), &taps);
    let uyy = filter_valid(&(y * y), &taps);
    let uxy = filter_valid(&(x * y), &taps);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for idx in 0..ux.len() {
        let (i, j) = (idx / ux.ncols(), idx % ux.ncols());
        let (mx, my) = (ux[[i, j]], uy[[i, j]]);
        let vx = uxx[[i, j]] - mx * mx;
        let vy = uyy[[i, j]] - my * my;
        let vxy = uxy[[i, j]] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * vxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / ux.len() as f64)
}
