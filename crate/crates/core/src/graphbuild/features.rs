//! Deterministic 64-dimensional patch descriptor.
//!
//! Layout:
//!
//! | range   | content                                                    |
//! |---------|------------------------------------------------------------|
//! | 0..16   | red histogram, 16 bins of width 16, sums to 1              |
//! | 16..32  | green histogram                                            |
//! | 32..48  | blue histogram                                             |
//! | 48..51  | per-channel mean of `value/255`                            |
//! | 51..54  | per-channel population std of `value/255`                  |
//! | 54..64  | gradient-magnitude histogram, 10 bins over `[0, √2]`, sums to 1 |
//!
//! Gradients use forward differences of the gray level `(r+g+b)/(3·255)` at
//! every pixel with a right and a lower neighbour. Patches narrower or shorter
//! than 2 pixels put all gradient mass in bin 0.

use crate::corruption::ImagePatch;

pub const FEATURE_DIM: usize = 64;
pub const HIST_BINS: usize = 16;
pub const GRAD_BINS: usize = 10;

pub fn toy_featurize(patch: &ImagePatch) -> Vec<f64> {
    let mut f = vec![0.0; FEATURE_DIM];
    let n = (patch.width * patch.height) as f64;
    let mut sum = [0.0f64; 3];
    let mut sum_sq = [0.0f64; 3];
    for px in patch.pixels.chunks_exact(3) {
        for c in 0..3 {
            f[c * HIST_BINS + usize::from(px[c]) / 16] += 1.0;
            let v = f64::from(px[c]) / 255.0;
            sum[c] += v;
            sum_sq[c] += v * v;
        }
    }
    for v in &mut f[..3 * HIST_BINS] {
        *v /= n;
    }
    for c in 0..3 {
        let mean = sum[c] / n;
        f[48 + c] = mean;
        f[51 + c] = (sum_sq[c] / n - mean * mean).max(0.0).sqrt();
    }

    let (w, h) = (patch.width, patch.height);
    let gray = |x: usize, y: usize| {
        let p = patch.pixel(x, y);
        (f64::from(p[0]) + f64::from(p[1]) + f64::from(p[2])) / (3.0 * 255.0)
    };
    let grad = &mut f[54..64];
    if w < 2 || h < 2 {
        grad[0] = 1.0;
        return f;
    }
    let max = std::f64::consts::SQRT_2;
    let mut count = 0.0;
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let g0 = gray(x, y);
            let gx = gray(x + 1, y) - g0;
            let gy = gray(x, y + 1) - g0;
            let mag = (gx * gx + gy * gy).sqrt();
            let bin = ((mag / max * GRAD_BINS as f64) as usize).min(GRAD_BINS - 1);
            grad[bin] += 1.0;
            count += 1.0;
        }
    }
    for v in grad.iter_mut() {
        *v /= count;
    }
    f
}
