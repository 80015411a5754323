//! Single- and three-band intensity images in `[0, 1]`, with PGM/PPM I/O.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ImageEncoder};
use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    bands: Vec<Array2<f64>>,
}

impl Image {
    pub fn mono(pixels: Array2<f64>) -> Self {
        Self { bands: vec![pixels] }
    }

    pub fn rgb(r: Array2<f64>, g: Array2<f64>, b: Array2<f64>) -> Result<Self> {
        if r.dim() != g.dim() || r.dim() != b.dim() {
            return Err(Error::Shape("colour bands differ in size".into()));
        }
        Ok(Self { bands: vec![r, g, b] })
    }

    pub fn from_bands(bands: Vec<Array2<f64>>) -> Result<Self> {
        match bands.len() {
            1 => Ok(Self { bands }),
            3 => {
                let mut it = bands.into_iter();
                Self::rgb(it.next().unwrap(), it.next().unwrap(), it.next().unwrap())
            }
            k => Err(Error::Shape(format!("{k} bands; expected 1 or 3"))),
        }
    }

    pub fn height(&self) -> usize {
        self.bands[0].nrows()
    }

    pub fn width(&self) -> usize {
        self.bands[0].ncols()
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn band(&self, i: usize) -> &Array2<f64> {
        &self.bands[i]
    }

    pub fn bands(&self) -> &[Array2<f64>] {
        &self.bands
    }

    pub fn into_bands(self) -> Vec<Array2<f64>> {
        self.bands
    }

    /// Left-right mirror image.
    pub fn mirrored(&self) -> Self {
        Self {
            bands: self.bands.iter().map(mirror_columns).collect(),
        }
    }

    /// Reads a binary PGM (P5) or PPM (P6), 8- or 16-bit, scaled to `[0, 1]`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::ImageReader::open(path.as_ref())?
            .with_guessed_format()?
            .decode()?;
        Self::from_dynamic(img)
    }

    pub fn from_dynamic(img: DynamicImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let grid = |f: &dyn Fn(usize, usize) -> f64| Array2::from_shape_fn((h, w), |(y, x)| f(y, x));
        match img {
            DynamicImage::ImageLuma8(buf) => Ok(Self::mono(grid(&|y, x| {
                buf.get_pixel(x as u32, y as u32)[0] as f64 / 255.0
            }))),
            DynamicImage::ImageLuma16(buf) => Ok(Self::mono(grid(&|y, x| {
                buf.get_pixel(x as u32, y as u32)[0] as f64 / 65535.0
            }))),
            DynamicImage::ImageRgb8(buf) => {
                let band = |c: usize| grid(&|y, x| buf.get_pixel(x as u32, y as u32)[c] as f64 / 255.0);
                Self::rgb(band(0), band(1), band(2))
            }
            DynamicImage::ImageRgb16(buf) => {
                let band = |c: usize| grid(&|y, x| buf.get_pixel(x as u32, y as u32)[c] as f64 / 65535.0);
                Self::rgb(band(0), band(1), band(2))
            }
            other => Err(Error::Format(format!("unsupported pixel layout {:?}", other.color()))),
        }
    }

    /// Writes an 8-bit PGM (one band) or PPM (three bands). Values are
    /// clamped to `[0, 1]` and rounded.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let (h, w) = (self.height(), self.width());
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let (bytes, subtype, color) = if self.bands.len() == 1 {
            let v: Vec<u8> = self.bands[0].iter().map(|&p| q(p)).collect();
            (v, PnmSubtype::Graymap(SampleEncoding::Binary), image::ExtendedColorType::L8)
        } else {
            let mut v = Vec::with_capacity(3 * h * w);
            for y in 0..h {
                for x in 0..w {
                    v.extend((0..3).map(|c| q(self.bands[c][[y, x]])));
                }
            }
            (v, PnmSubtype::Pixmap(SampleEncoding::Binary), image::ExtendedColorType::Rgb8)
        };
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        PnmEncoder::new(file)
            .with_subtype(subtype)
            .write_image(&bytes, w as u32, h as u32, color)?;
        Ok(())
    }
}

pub fn mirror_columns(a: &Array2<f64>) -> Array2<f64> {
    let w = a.ncols();
    Array2::from_shape_fn(a.dim(), |(y, x)| a[[y, w - 1 - x]])
}

/// Copies a column-major vectorized `h × w` block back into a grid.
pub fn from_column_major(v: &[f64], h: usize, w: usize) -> Array2<f64> {
    Array2::from_shape_fn((h, w), |(y, x)| v[x * h + y])
}

/// Column-major vectorization of `a[:, start..start + width]`.
pub fn to_column_major(a: &Array2<f64>, start: usize, width: usize) -> Vec<f64> {
    let h = a.nrows();
    let mut out = Vec::with_capacity(h * width);
    for x in start..start + width {
        out.extend(a.column(x).iter());
    }
    out
}
