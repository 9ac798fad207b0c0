use super::ImagePatch;
use crate::util::rng;
use rand::Rng;

/// Sparse, point-symmetric filter given as `(dx, dy, weight)` taps.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub taps: Vec<(i32, i32, f64)>,
}

impl Kernel {
    pub fn weight_sum(&self) -> f64 {
        self.taps.iter().map(|t| t.2).sum()
    }
}

/// Uniform disk of the given radius: all offsets with `dx² + dy² ≤ r²`.
pub fn disk_kernel(radius: usize) -> Kernel {
    let r = radius as i32;
    let mut offs = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                offs.push((dx, dy));
            }
        }
    }
    let w = 1.0 / offs.len() as f64;
    Kernel {
        taps: offs.into_iter().map(|(dx, dy)| (dx, dy, w)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionAngle {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl MotionAngle {
    pub fn from_seed(seed: u64) -> Self {
        match rng(seed).random_range(0..4u32) {
            0 => MotionAngle::Deg0,
            1 => MotionAngle::Deg45,
            2 => MotionAngle::Deg90,
            _ => MotionAngle::Deg135,
        }
    }

    /// Unit step along the line in image coordinates (y grows downward).
    fn step(self) -> (i32, i32) {
        match self {
            MotionAngle::Deg0 => (1, 0),
            MotionAngle::Deg45 => (1, -1),
            MotionAngle::Deg90 => (0, -1),
            MotionAngle::Deg135 => (-1, -1),
        }
    }
}

/// One-pixel-wide line of `length` taps (odd lengths centered exactly).
pub fn line_kernel(length: usize, angle: MotionAngle) -> Kernel {
    let length = length.max(1);
    let (sx, sy) = angle.step();
    let half = (length as i32 - 1) / 2;
    let w = 1.0 / length as f64;
    Kernel {
        taps: (0..length as i32)
            .map(|i| {
                let t = i - half;
                (t * sx, t * sy, w)
            })
            .collect(),
    }
}

/// Filters every channel with replicate-padded borders. Returns unrounded
/// values, `width*height*3` in pixel order.
pub fn convolve_replicate(img: &ImagePatch, kernel: &Kernel) -> Vec<f64> {
    let (w, h) = (img.width as i64, img.height as i64);
    let mut out = vec![0.0; img.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for &(dx, dy, wt) in &kernel.taps {
                let sx = (x + i64::from(dx)).clamp(0, w - 1) as usize;
                let sy = (y + i64::from(dy)).clamp(0, h - 1) as usize;
                let i = (sy * img.width + sx) * 3;
                acc[0] += wt * f64::from(img.pixels[i]);
                acc[1] += wt * f64::from(img.pixels[i + 1]);
                acc[2] += wt * f64::from(img.pixels[i + 2]);
            }
            let o = (y as usize * img.width + x as usize) * 3;
            out[o..o + 3].copy_from_slice(&acc);
        }
    }
    out
}

/// Rounds half to even and clamps to [0,255].
pub fn quantize(like: &ImagePatch, values: &[f64]) -> ImagePatch {
    let mut out = like.clone();
    for (dst, v) in out.pixels.iter_mut().zip(values) {
        *dst = v.round_ties_even().clamp(0.0, 255.0) as u8;
    }
    out
}
