//! HSV conversions and the hue/saturation corruptions.
//!
//! RGB channels are scaled to [0,1]. With `max`, `min` the channel extremes
//! and `c = max - min`:
//!
//! * `v = max`, `s = c / max` (0 when `max == 0`)
//! * `h = 60·((g−b)/c mod 6)` if `max == r`, `60·((b−r)/c + 2)` if `max == g`,
//!   `60·((r−g)/c + 4)` otherwise, and 0 when `c == 0`.
//!
//! The inverse uses `c = v·s`, `x = c·(1 − |(h/60) mod 2 − 1|)`, `m = v − c`
//! and picks the channel permutation from the 60° sector of `h`. Results are
//! scaled back by 255 and rounded half to even.

use super::ImagePatch;

pub fn rgb_to_hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let [r, g, b] = rgb.map(|c| f64::from(c) / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let c = max - min;
    let h = if c == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / c).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / c + 2.0)
    } else {
        60.0 * ((r - g) / c + 4.0)
    };
    let s = if max > 0.0 { c / max } else { 0.0 };
    (h, s, max)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0);
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r1, g1, b1].map(|ch| ((ch + m) * 255.0).round_ties_even().clamp(0.0, 255.0) as u8)
}

/// Multiplies HSV saturation by `factor`, clamped to [0,1].
pub fn scale_saturation(img: &ImagePatch, factor: f64) -> ImagePatch {
    img.map_pixels(|p| {
        let (h, s, v) = rgb_to_hsv(p);
        if s == 0.0 {
            return p;
        }
        hsv_to_rgb(h, (s * factor).clamp(0.0, 1.0), v)
    })
}

/// Rotates hue by `degrees` modulo 360. Gray pixels are left alone.
pub fn rotate_hue(img: &ImagePatch, degrees: f64) -> ImagePatch {
    img.map_pixels(|p| {
        let (h, s, v) = rgb_to_hsv(p);
        if s == 0.0 {
            return p;
        }
        hsv_to_rgb(h + degrees, s, v)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primaries() {
        assert_eq!(rgb_to_hsv([255, 0, 0]), (0.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv([0, 255, 0]), (120.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv([0, 0, 255]), (240.0, 1.0, 1.0));
        assert_eq!(hsv_to_rgb(300.0, 1.0, 1.0), [255, 0, 255]);
    }

    #[test]
    fn red_rotated_120_is_green() {
        let img = ImagePatch::filled(1, 1, [255, 0, 0]);
        assert_eq!(rotate_hue(&img, 120.0).pixel(0, 0), [0, 255, 0]);
    }

    #[test]
    fn round_trip_within_one_level() {
        for r in (0..=255).step_by(15) {
            for g in (0..=255).step_by(17) {
                for b in (0..=255).step_by(13) {
                    let p = [r as u8, g as u8, b as u8];
                    let (h, s, v) = rgb_to_hsv(p);
                    let q = hsv_to_rgb(h, s, v);
                    for c in 0..3 {
                        assert!((i32::from(p[c]) - i32::from(q[c])).abs() <= 1, "{p:?} -> {q:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn rotation_inverse_within_one_level() {
        let mut img = ImagePatch::filled(3, 1, [0, 0, 0]);
        img.set_pixel(0, 0, [200, 40, 90]);
        img.set_pixel(1, 0, [12, 180, 250]);
        img.set_pixel(2, 0, [90, 91, 60]);
        for deg in [18.0, 54.0, 90.0] {
            let back = rotate_hue(&rotate_hue(&img, deg), -deg);
            for (a, b) in img.pixels.iter().zip(&back.pixels) {
                assert!((i32::from(*a) - i32::from(*b)).abs() <= 1);
            }
        }
    }

    #[test]
    fn unit_factor_is_near_identity() {
        let mut img = ImagePatch::filled(2, 1, [0, 0, 0]);
        img.set_pixel(0, 0, [201, 33, 77]);
        img.set_pixel(1, 0, [5, 6, 250]);
        let out = scale_saturation(&img, 1.0);
        for (a, b) in img.pixels.iter().zip(&out.pixels) {
            assert!((i32::from(*a) - i32::from(*b)).abs() <= 1);
        }
    }
}
