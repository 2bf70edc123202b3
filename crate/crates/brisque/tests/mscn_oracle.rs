//! Checks the separable MSCN implementation against an independent
//! direct 2D convolution written from the definition.

use brisque::{compute_mscn, GrayImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct (non-separable) 7x7 Gaussian-window MSCN: full 2D kernel,
/// explicit mirror indexing, no intermediate planes.
fn mscn_direct(img: &GrayImage) -> Vec<f64> {
    let sigma = 7.0 / 6.0;
    let mut kernel = [[0.0f64; 7]; 7];
    let mut sum = 0.0;
    for (r, row) in kernel.iter_mut().enumerate() {
        for (c, w) in row.iter_mut().enumerate() {
            let dy = r as f64 - 3.0;
            let dx = c as f64 - 3.0;
            *w = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            sum += *w;
        }
    }
    for row in kernel.iter_mut() {
        for w in row.iter_mut() {
            *w /= sum;
        }
    }

    let (w, h) = (img.width() as isize, img.height() as isize);
    let mirror = |i: isize, n: isize| -> usize {
        if i < 0 {
            (-i - 1) as usize
        } else if i >= n {
            (2 * n - 1 - i) as usize
        } else {
            i as usize
        }
    };

    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let mut mu = 0.0;
            let mut second = 0.0;
            for (r, row) in kernel.iter().enumerate() {
                for (c, &weight) in row.iter().enumerate() {
                    let sy = mirror(y + r as isize - 3, h);
                    let sx = mirror(x + c as isize - 3, w);
                    let v = img.get(sx, sy);
                    mu += weight * v;
                    second += weight * v * v;
                }
            }
            let sigma_local = (second - mu * mu).max(0.0).sqrt();
            out.push((img.get(x as usize, y as usize) - mu) / (sigma_local + 1.0));
        }
    }
    out
}

fn noise_image(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let luma = (0..width * height).map(|_| rng.random_range(0.0..255.0)).collect();
    GrayImage::new(width, height, luma).unwrap()
}

#[test]
fn separable_filter_matches_direct_convolution() {
    for (w, h, seed) in [(16, 16, 1u64), (33, 21, 2), (64, 48, 3)] {
        let img = noise_image(w, h, seed);
        let field = compute_mscn(&img);
        let oracle = mscn_direct(&img);
        for (i, (&got, &want)) in field.values().iter().zip(oracle.iter()).enumerate() {
            assert!(
                (got - want).abs() < 1e-10,
                "{w}x{h} seed {seed}: mismatch at {i}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn checkerboard_matches_direct_convolution() {
    let (w, h) = (32, 32);
    let luma: Vec<f64> = (0..w * h)
        .map(|i| if (i / w + i % w) % 2 == 0 { 0.0 } else { 255.0 })
        .collect();
    let img = GrayImage::new(w, h, luma).unwrap();
    let field = compute_mscn(&img);
    let oracle = mscn_direct(&img);
    for (&got, &want) in field.values().iter().zip(oracle.iter()) {
        assert!((got - want).abs() < 1e-10);
    }
}

#[test]
fn scaling_a_zero_mean_texture_converges_to_the_unscaled_field() {
    // On a zero-mean texture, intensity scaling by c >= 1 grows sigma
    // linearly, so (c * I - c * mu) / (c * sigma + 1) approaches
    // (I - mu) / sigma from below as c grows; relative to the c = 1
    // field, successive scalings must shrink the gap.
    let base = noise_image(32, 32, 7);
    let centered: Vec<f64> = {
        let mean = base.luma().iter().sum::<f64>() / base.luma().len() as f64;
        base.luma().iter().map(|v| v - mean).collect()
    };

    let field_at = |c: f64| {
        let luma: Vec<f64> = centered.iter().map(|v| v * c).collect();
        mscn_direct(&GrayImage::new(32, 32, luma).unwrap())
    };
    // Limit field: sigma dominates the stabilizer as c grows.
    let reference = field_at(4096.0);

    let mut prev_gap = f64::INFINITY;
    for c in [1.0, 4.0, 16.0, 64.0] {
        let scaled = compute_mscn(&GrayImage::new(
            32,
            32,
            centered.iter().map(|v| v * c).collect(),
        )
        .unwrap());
        let gap = scaled
            .values()
            .iter()
            .zip(reference.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(gap < prev_gap, "gap {gap} did not shrink at c = {c}");
        prev_gap = gap;
    }
}
