//! Opaque pen strokes drawn over the image.

use rand::Rng;

use super::ImagePatch;
use crate::util::rng;

pub const MARK_COLOR: [u8; 3] = [24, 96, 56];
/// Pixels whose center lies closer than this to a stroke are painted (4 px wide).
pub const MARK_HALF_WIDTH: f64 = 2.0;

/// Line segment in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stroke {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Stroke {
    pub fn distance_to(&self, px: f64, py: f64) -> f64 {
        let (dx, dy) = (self.x1 - self.x0, self.y1 - self.y0);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((px - self.x0) * dx + (py - self.y0) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (cx, cy) = (self.x0 + t * dx, self.y0 + t * dy);
        ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
    }
}

/// Seeded stroke geometry. Each stroke starts uniformly inside the image and
/// runs for a quarter to half of the shorter side; a component that would
/// leave the image is mirrored, which always fits at that length.
pub fn mark_strokes(width: usize, height: usize, count: usize, seed: u64) -> Vec<Stroke> {
    let mut r = rng(seed);
    let (w, h) = (width as f64, height as f64);
    let short = w.min(h);
    (0..count)
        .map(|_| {
            let x0 = r.random_range(0.0..w);
            let y0 = r.random_range(0.0..h);
            let theta = r.random_range(0.0..std::f64::consts::TAU);
            let len = r.random_range(0.25 * short..=0.5 * short);
            let (mut dx, mut dy) = (len * theta.cos(), len * theta.sin());
            if !(0.0..=w).contains(&(x0 + dx)) {
                dx = -dx;
            }
            if !(0.0..=h).contains(&(y0 + dy)) {
                dy = -dy;
            }
            Stroke {
                x0,
                y0,
                x1: x0 + dx,
                y1: y0 + dy,
            }
        })
        .collect()
}

pub fn draw_strokes(img: &ImagePatch, strokes: &[Stroke]) -> ImagePatch {
    let mut out = img.clone();
    for s in strokes {
        let pad = MARK_HALF_WIDTH + 1.0;
        let xa = (s.x0.min(s.x1) - pad).floor().max(0.0) as usize;
        let xb = ((s.x0.max(s.x1) + pad).ceil().max(0.0) as usize).min(img.width);
        let ya = (s.y0.min(s.y1) - pad).floor().max(0.0) as usize;
        let yb = ((s.y0.max(s.y1) + pad).ceil().max(0.0) as usize).min(img.height);
        for y in ya..yb {
            for x in xa..xb {
                if s.distance_to(x as f64 + 0.5, y as f64 + 0.5) < MARK_HALF_WIDTH {
                    out.set_pixel(x, y, MARK_COLOR);
                }
            }
        }
    }
    out
}
