pub mod capture;
pub mod error;
pub mod experiments;
pub mod io;
pub mod metrics;
pub mod multispectral;
pub mod noiselet;
pub mod plan;
pub mod raster;
pub mod recon;
pub mod rng;

pub use capture::{capture, flatfield, scan, to_complex, CaptureConfig, CroppedSamples, SampleMatrix, SampleSource, ScanDirection};
pub use error::{Error, Result};
pub use plan::{draw_rows, build_slm, rows_for_rate, BlockOperator, Ordering, SensingPlan, SlmMask};
pub use raster::Image;
pub use recon::{reconstruct_image, tv_min, ReconConfig, ReconReport};
pub use metrics::{psnr, ssim, QualityReport};

// Book chapters run as doc-tests so the guide cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/noiselets.md")]
    mod noiselets {}
    #[doc = include_str!("../../../book/src/binarization.md")]
    mod binarization {}
    #[doc = include_str!("../../../book/src/plans.md")]
    mod plans {}
    #[doc = include_str!("../../../book/src/capture.md")]
    mod capture {}
    #[doc = include_str!("../../../book/src/reconstruction.md")]
    mod reconstruction {}
    #[doc = include_str!("../../../book/src/multispectral.md")]
    mod multispectral {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
