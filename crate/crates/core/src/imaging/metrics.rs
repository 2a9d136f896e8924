//! Full-reference fidelity metrics: PSNR and Gaussian-window SSIM.

use std::fmt;

use serde::{Serialize, Serializer};

use super::{ImagingError, RasterImage};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_MIN_SIDE: u32 = SSIM_WINDOW as u32;
pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Peak signal-to-noise ratio in decibels. Identical inputs have no finite
/// value and are reported as [`Psnr::Infinite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Infinite,
    Finite(f64),
}

impl Psnr {
    pub fn value(self) -> f64 {
        match self {
            Psnr::Infinite => f64::INFINITY,
            Psnr::Finite(db) => db,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Infinite => f.write_str("Infinite"),
            Psnr::Finite(db) => write!(f, "{db:.4}"),
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Psnr::Infinite => s.serialize_str("Infinite"),
            Psnr::Finite(db) => s.serialize_f64(*db),
        }
    }
}

/// `10 * log10(255^2 / MSE)` with MSE over all pixels and channels.
pub fn psnr(a: &RasterImage, b: &RasterImage) -> Result<Psnr, ImagingError> {
    a.ensure_same_shape(b)?;
    let sse: u64 = a
        .as_bytes()
        .iter()
        .zip(b.as_bytes())
        .map(|(&x, &y)| {
            let d = i64::from(x) - i64::from(y);
            (d * d) as u64
        })
        .sum();
    if sse == 0 {
        return Ok(Psnr::Infinite);
    }
    let mse = sse as f64 / a.as_bytes().len() as f64;
    Ok(Psnr::Finite(10.0 * (255.0 * 255.0 / mse).log10()))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, w) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *w = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Separable "valid" convolution: output is `(w - 10) x (h - 10)`.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k
                .iter()
                .zip(&row[x..x + SSIM_WINDOW])
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean structural similarity over every 11x11 window (Gaussian weights,
/// sigma 1.5) fully inside the image. Colour inputs are compared on luma.
pub fn ssim(a: &RasterImage, b: &RasterImage) -> Result<f64, ImagingError> {
    if a.dims() != b.dims() {
        return Err(ImagingError::DimensionMismatch {
            expected: a.dims(),
            found: b.dims(),
        });
    }
    let (w, h) = a.dims();
    if w < SSIM_MIN_SIDE || h < SSIM_MIN_SIDE {
        return Err(ImagingError::TooSmall {
            width: w,
            height: h,
            min: SSIM_MIN_SIDE,
        });
    }
    let (w, h) = (w as usize, h as usize);
    let la = a.luma();
    let lb = b.luma();
    if la == lb {
        return Ok(1.0);
    }
    let k = gaussian_kernel();

    let aa: Vec<f64> = la.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = lb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| x * y).collect();

    let mu_a = filter_valid(&la, w, h, &k);
    let mu_b = filter_valid(&lb, w, h, &k);
    let e_aa = filter_valid(&aa, w, h, &k);
    let e_bb = filter_valid(&bb, w, h, &k);
    let e_ab = filter_valid(&ab, w, h, &k);

    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2);
        total += num / den;
    }
    Ok((total / n as f64).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Channels;

    #[test]
    fn psnr_identical_is_infinite() {
        let x = RasterImage::from_fn_rgb(5, 4, |x, y| [x as u8, y as u8, 9]);
        assert_eq!(psnr(&x, &x).unwrap(), Psnr::Infinite);
    }

    #[test]
    fn psnr_black_vs_white_is_zero() {
        let a = RasterImage::filled(8, 8, Channels::Gray, &[0]);
        let b = RasterImage::filled(8, 8, Channels::Gray, &[255]);
        assert_eq!(psnr(&a, &b).unwrap(), Psnr::Finite(0.0));
    }

    #[test]
    fn psnr_mse_fifty() {
        let a = RasterImage::new(2, 1, Channels::Gray, vec![0, 0]).unwrap();
        let b = RasterImage::new(2, 1, Channels::Gray, vec![10, 0]).unwrap();
        // MSE = (10² + 0²) / 2 = 50, so PSNR = 10·log10(65025 / 50) = 31.1411 dB.
        let expected = 10.0 * (65025.0f64 / 50.0).log10();
        assert!((expected - 31.1411).abs() < 1e-4);
        let db = psnr(&a, &b).unwrap().value();
        assert!((db - expected).abs() < 1e-3, "{db}");
    }

    #[test]
    fn psnr_shape_mismatch() {
        let a = RasterImage::filled(2, 2, Channels::Gray, &[0]);
        let b = RasterImage::filled(2, 3, Channels::Gray, &[0]);
        assert!(matches!(
            psnr(&a, &b),
            Err(ImagingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..SSIM_WINDOW {
            assert_eq!(k[i], k[SSIM_WINDOW - 1 - i]);
        }
    }

    #[test]
    fn ssim_identical_is_one() {
        let x = RasterImage::from_fn_gray(16, 12, |x, y| ((x * 31 + y * 17) % 256) as u8);
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn ssim_rejects_small_inputs() {
        let x = RasterImage::filled(10, 40, Channels::Gray, &[3]);
        assert!(matches!(ssim(&x, &x), Err(ImagingError::TooSmall { .. })));
    }

    #[test]
    fn ssim_inverted_image_is_dissimilar() {
        let x = RasterImage::from_fn_gray(32, 32, |x, y| (64 + (x * 7 + y * 13) % 128) as u8);
        let inv = RasterImage::from_fn_gray(32, 32, |px, py| 255 - x.pixel(px, py)[0]);
        let s = ssim(&x, &inv).unwrap();
        assert!(s < 0.5, "{s}");
        assert!(s >= -1.0);
    }
}
