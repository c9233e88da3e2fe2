//! Grayscale image completion.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat, ImageReader};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::completion::{ap_complete, CompletionConfig};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, ObservationMask};

use super::{sample_mask, InitKind};

/// Grayscale image with intensities scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub pixels: Matrix,
    /// Largest raw intensity the source format can hold.
    pub maxval: u16,
}

impl GrayImage {
    pub fn width(&self) -> usize {
        self.pixels.cols()
    }

    pub fn height(&self) -> usize {
        self.pixels.rows()
    }

    /// Rounds to 8-bit intensities and back.
    pub fn quantized(&self) -> Matrix {
        Matrix::from_fn(self.height(), self.width(), |i, j| quantize(self.pixels[(i, j)]) as f64 / 255.0)
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn from_dynamic(img: DynamicImage) -> Result<GrayImage> {
    let (pixels, maxval) = match img {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            (
                Matrix::from_fn(h as usize, w as usize, |i, j| buf.get_pixel(j as u32, i as u32)[0] as f64 / 255.0),
                255,
            )
        }
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            (
                Matrix::from_fn(h as usize, w as usize, |i, j| {
                    buf.get_pixel(j as u32, i as u32)[0] as f64 / 65535.0
                }),
                u16::MAX,
            )
        }
        other => {
            return Err(Error::Image(format!(
                "unsupported pixel format {:?}; only grayscale images are accepted",
                other.color()
            )))
        }
    };
    Ok(GrayImage { pixels, maxval })
}

/// Decodes a P2 or P5 image.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let img = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Pnm)
        .decode()
        .map_err(|e| Error::Image(e.to_string()))?;
    from_dynamic(img)
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    decode_pgm(&std::fs::read(path)?)
}

/// Encodes as binary P5 with maxval 255, clamping to `[0, 1]` first.
pub fn encode_pgm(pixels: &Matrix) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", pixels.cols(), pixels.rows()).into_bytes();
    for i in 0..pixels.rows() {
        for j in 0..pixels.cols() {
            out.push(quantize(pixels[(i, j)]));
        }
    }
    out
}

pub fn write_pgm(path: &Path, pixels: &Matrix) -> Result<()> {
    Ok(std::fs::write(path, encode_pgm(pixels))?)
}

/// `L R^T / rank` with `U(0, 1)` factors, so every pixel lies in `[0, 1]`.
pub fn synthetic_low_rank_image(rows: usize, cols: usize, rank: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l: Vec<f64> = (0..rows * rank).map(|_| rng.random()).collect();
    let r: Vec<f64> = (0..cols * rank).map(|_| rng.random()).collect();
    Matrix::from_fn(rows, cols, |i, j| {
        (0..rank).map(|k| l[i * rank + k] * r[j * rank + k]).sum::<f64>() / rank as f64
    })
}

#[derive(Clone, Debug)]
pub enum ImageSource {
    Pgm(PathBuf),
    Pixels(GrayImage),
}

#[derive(Clone, Debug)]
pub struct ImageJob {
    pub source: ImageSource,
    pub missing_rate: f64,
    pub rank: usize,
    pub init: InitKind,
    pub seed: u64,
    pub tol: f64,
    pub max_iters: usize,
    pub masked_out: Option<PathBuf>,
    pub recovered_out: Option<PathBuf>,
}

impl ImageJob {
    pub fn new(source: ImageSource, missing_rate: f64, rank: usize) -> Self {
        Self {
            source,
            missing_rate,
            rank,
            init: InitKind::MaskFill,
            seed: 0,
            tol: 1e-6,
            max_iters: 5000,
            masked_out: None,
            recovered_out: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ImageOutcome {
    pub mask: ObservationMask,
    /// Known pixels kept, unknown ones zero.
    pub masked: Matrix,
    /// Completion clamped to `[0, 1]`, before quantization.
    pub recovered: Matrix,
    /// RMSE of `recovered` against the original.
    pub rmse: f64,
    /// RMSE after both images are quantized to 8 bits.
    pub rmse_quantized: f64,
    pub iters: usize,
    pub converged: bool,
}

fn rmse(a: &Matrix, b: &Matrix) -> Result<f64> {
    Ok(a.sub(b)?.frobenius_norm() / ((a.rows() * a.cols()) as f64).sqrt())
}

pub fn image_recover(job: &ImageJob) -> Result<ImageOutcome> {
    let original = match &job.source {
        ImageSource::Pgm(path) => read_pgm(path)?,
        ImageSource::Pixels(img) => img.clone(),
    };
    let (rows, cols) = original.pixels.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let mask = sample_mask(rows, cols, job.missing_rate, &mut rng)?;
    let masked = crate::linalg::project_mask(&original.pixels, &mask)?;
    let config = CompletionConfig::new(job.rank)
        .with_tol(job.tol)
        .with_max_iters(job.max_iters)
        .with_init(job.init.to_init(job.rank));
    let result = ap_complete(&masked, &mask, &config)?;
    let x = result.x_star.as_dmatrix();
    let recovered = Matrix::from_fn(rows, cols, |i, j| x[(i, j)].clamp(0.0, 1.0));
    if let Some(path) = &job.masked_out {
        write_pgm(path, &masked)?;
    }
    if let Some(path) = &job.recovered_out {
        write_pgm(path, &recovered)?;
    }
    let recovered_img = GrayImage {
        pixels: recovered.clone(),
        maxval: 255,
    };
    Ok(ImageOutcome {
        rmse: rmse(&recovered, &original.pixels)?,
        rmse_quantized: rmse(&recovered_img.quantized(), &original.quantized())?,
        mask,
        masked,
        recovered,
        iters: result.iters,
        converged: result.converged,
    })
}
