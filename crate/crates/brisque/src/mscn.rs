//! Mean-subtracted contrast-normalized (MSCN) coefficients.
//!
//! Local mean and deviation are taken under a 7x7 circularly symmetric
//! Gaussian window with scale 7/6, unit-normalized; image borders are
//! mirror-reflected (edge pixel included). The stabilizing constant is 1
//! on the [0, 255] intensity scale.

use crate::gray::GrayImage;

/// Window size of the local Gaussian weighting.
pub const WINDOW: usize = 7;
/// Stabilizing constant added to the local deviation.
pub const STABILIZER: f64 = 1.0;

/// The MSCN coefficient plane of an image.
#[derive(Debug, Clone)]
pub struct MscnField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl MscnField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Neighboring-product orientations used for the asymmetric statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Horizontal,
    Vertical,
    MainDiagonal,
    SecondaryDiagonal,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [
        Orientation::Horizontal,
        Orientation::Vertical,
        Orientation::MainDiagonal,
        Orientation::SecondaryDiagonal,
    ];
}

fn gaussian_kernel_1d() -> [f64; WINDOW] {
    let sigma = WINDOW as f64 / 6.0;
    let half = (WINDOW / 2) as isize;
    let mut k = [0.0; WINDOW];
    for (i, slot) in k.iter_mut().enumerate() {
        let d = (i as isize - half) as f64;
        *slot = (-d * d / (2.0 * sigma * sigma)).exp();
    }
    let sum: f64 = k.iter().sum();
    for slot in &mut k {
        *slot /= sum;
    }
    k
}

/// Mirror reflection including the edge sample: -1 maps to 0, `n` maps
/// to `n - 1`.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    // Window radius is far below image size, so one fold suffices; loop
    // keeps the helper total for tiny planes.
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian filtering with mirrored borders.
fn gaussian_filter(values: &[f64], width: usize, height: usize) -> Vec<f64> {
    let k = gaussian_kernel_1d();
    let half = (WINDOW / 2) as isize;

    let mut rows = vec![0.0; values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (j, &w) in k.iter().enumerate() {
                let src = reflect(x as isize + j as isize - half, width);
                acc += w * row[src];
            }
            rows[y * width + x] = acc;
        }
    }

    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (j, &w) in k.iter().enumerate() {
                let src = reflect(y as isize + j as isize - half, height);
                acc += w * rows[src * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Compute the MSCN coefficients `(I - mu) / (sigma + 1)` of an image.
pub fn compute_mscn(img: &GrayImage) -> MscnField {
    let (w, h) = (img.width(), img.height());
    let luma = img.luma();

    let mu = gaussian_filter(luma, w, h);
    let squared: Vec<f64> = luma.iter().map(|v| v * v).collect();
    let mu_sq = gaussian_filter(&squared, w, h);

    let values = luma
        .iter()
        .zip(mu.iter().zip(mu_sq.iter()))
        .map(|(&v, (&m, &m2))| {
            let sigma = (m2 - m * m).max(0.0).sqrt();
            (v - m) / (sigma + STABILIZER)
        })
        .collect();

    MscnField { width: w, height: h, values }
}

/// Products of each coefficient with its neighbor along `orientation`.
pub fn paired_products(field: &MscnField, orientation: Orientation) -> Vec<f64> {
    let (w, h) = (field.width, field.height);
    let mut out = Vec::new();
    match orientation {
        Orientation::Horizontal => {
            out.reserve((w - 1) * h);
            for y in 0..h {
                for x in 0..w - 1 {
                    out.push(field.get(x, y) * field.get(x + 1, y));
                }
            }
        }
        Orientation::Vertical => {
            out.reserve(w * (h - 1));
            for y in 0..h - 1 {
                for x in 0..w {
                    out.push(field.get(x, y) * field.get(x, y + 1));
                }
            }
        }
        Orientation::MainDiagonal => {
            out.reserve((w - 1) * (h - 1));
            for y in 0..h - 1 {
                for x in 0..w - 1 {
                    out.push(field.get(x, y) * field.get(x + 1, y + 1));
                }
            }
        }
        Orientation::SecondaryDiagonal => {
            out.reserve((w - 1) * (h - 1));
            for y in 0..h - 1 {
                for x in 1..w {
                    out.push(field.get(x, y) * field.get(x - 1, y + 1));
                }
            }
        }
    }
    out
}
