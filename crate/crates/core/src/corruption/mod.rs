//! Synthetic slide artifacts at five graded severities.
//!
//! Every corruption maps an RGB image to a new image of the same size. The
//! severity ladders are fixed constants so each corruption has an exact
//! per-pixel reference.

mod color;
mod dataset;
mod kernel;
mod mark;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use color::{hsv_to_rgb, rgb_to_hsv, rotate_hue, scale_saturation};
pub use dataset::{corrupt_dataset, plan_corruption, read_manifest, write_manifest, ManifestEntry, NamedImages};
pub use kernel::{convolve_replicate, disk_kernel, line_kernel, quantize, Kernel, MotionAngle};
pub use mark::{draw_strokes, mark_strokes, Stroke, MARK_COLOR, MARK_HALF_WIDTH};

pub const BRIGHTNESS_SHIFT: [i32; 5] = [16, 32, 48, 64, 80];
pub const SATURATION_FACTOR: [f64; 5] = [1.3, 1.6, 1.9, 2.2, 2.5];
pub const HUE_DEGREES: [f64; 5] = [18.0, 36.0, 54.0, 72.0, 90.0];
pub const PIXELATE_BLOCK: [usize; 5] = [2, 4, 8, 16, 32];
pub const DEFOCUS_RADIUS: [usize; 5] = [1, 2, 3, 4, 6];
pub const MOTION_LENGTH: [usize; 5] = [5, 9, 13, 17, 21];
pub const MARK_STROKES: [usize; 5] = [1, 2, 3, 4, 5];

/// 8-bit RGB raster, row-major, plus its grid position in a source image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePatch {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub grid_x: u32,
    pub grid_y: u32,
}

impl ImagePatch {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::InvalidArgument(format!(
                "pixel buffer of {} bytes for {width}x{height} RGB",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            grid_x: 0,
            grid_y: 0,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self {
            width,
            height,
            pixels,
            grid_x: 0,
            grid_y: 0,
        }
    }

    pub fn with_grid(mut self, grid_x: u32, grid_y: u32) -> Self {
        self.grid_x = grid_x;
        self.grid_y = grid_y;
        self
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    fn map_pixels(&self, f: impl Fn([u8; 3]) -> [u8; 3]) -> ImagePatch {
        let mut out = self.clone();
        for px in out.pixels.chunks_exact_mut(3) {
            let v = f([px[0], px[1], px[2]]);
            px.copy_from_slice(&v);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Severity(u8);

impl Severity {
    pub fn new(level: u8) -> Result<Self> {
        if (1..=5).contains(&level) {
            Ok(Severity(level))
        } else {
            Err(Error::Severity(level))
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    fn index(self) -> usize {
        usize::from(self.0 - 1)
    }
}

impl TryFrom<u8> for Severity {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Severity::new(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CorruptionKind {
    Bright,
    Saturate,
    Hue,
    Pixelate,
    Defocus,
    Motion,
    Mark,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 7] = [
        CorruptionKind::Bright,
        CorruptionKind::Saturate,
        CorruptionKind::Hue,
        CorruptionKind::Pixelate,
        CorruptionKind::Defocus,
        CorruptionKind::Motion,
        CorruptionKind::Mark,
    ];

    /// Kinds used by the experiment matrix; pen marks are left out.
    pub const EXPERIMENT: [CorruptionKind; 6] = [
        CorruptionKind::Bright,
        CorruptionKind::Saturate,
        CorruptionKind::Hue,
        CorruptionKind::Pixelate,
        CorruptionKind::Defocus,
        CorruptionKind::Motion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::Bright => "bright",
            CorruptionKind::Saturate => "saturate",
            CorruptionKind::Hue => "hue",
            CorruptionKind::Pixelate => "pixelate",
            CorruptionKind::Defocus => "defocus",
            CorruptionKind::Motion => "motion",
            CorruptionKind::Mark => "mark",
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

/// Parses a comma-separated kind list such as `bright,hue`.
pub fn parse_kinds(s: &str) -> Result<Vec<CorruptionKind>> {
    let kinds = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()?;
    if kinds.is_empty() {
        return Err(Error::InvalidArgument("empty corruption kind list".into()));
    }
    Ok(kinds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: Severity,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u8, seed: u64) -> Result<Self> {
        Ok(Self {
            kind,
            severity: Severity::new(severity)?,
            seed,
        })
    }

    pub fn apply(&self, img: &ImagePatch) -> ImagePatch {
        let s = self.severity;
        match self.kind {
            CorruptionKind::Bright => apply_brightness(img, s),
            CorruptionKind::Saturate => apply_saturation(img, s),
            CorruptionKind::Hue => apply_hue(img, s),
            CorruptionKind::Pixelate => apply_pixelate(img, s),
            CorruptionKind::Defocus => apply_defocus(img, s),
            CorruptionKind::Motion => apply_motion(img, s, self.seed),
            CorruptionKind::Mark => apply_mark(img, s, self.seed),
        }
    }
}

/// Adds `delta` to every channel with saturation at 0 and 255.
pub fn shift_brightness(img: &ImagePatch, delta: i32) -> ImagePatch {
    img.map_pixels(|p| p.map(|c| (i32::from(c) + delta).clamp(0, 255) as u8))
}

pub fn apply_brightness(img: &ImagePatch, severity: Severity) -> ImagePatch {
    shift_brightness(img, BRIGHTNESS_SHIFT[severity.index()])
}

pub fn apply_saturation(img: &ImagePatch, severity: Severity) -> ImagePatch {
    scale_saturation(img, SATURATION_FACTOR[severity.index()])
}

pub fn apply_hue(img: &ImagePatch, severity: Severity) -> ImagePatch {
    rotate_hue(img, HUE_DEGREES[severity.index()])
}

/// Replaces each `block`x`block` tile (partial at the right and bottom
/// edges) by its per-channel mean, rounded half to even.
pub fn pixelate_blocks(img: &ImagePatch, block: usize) -> ImagePatch {
    let block = block.max(1);
    let mut out = img.clone();
    for by in (0..img.height).step_by(block) {
        for bx in (0..img.width).step_by(block) {
            let y1 = (by + block).min(img.height);
            let x1 = (bx + block).min(img.width);
            let mut sum = [0u64; 3];
            for y in by..y1 {
                for x in bx..x1 {
                    let p = img.pixel(x, y);
                    for c in 0..3 {
                        sum[c] += u64::from(p[c]);
                    }
                }
            }
            let n = ((y1 - by) * (x1 - bx)) as f64;
            let mean = sum.map(|s| (s as f64 / n).round_ties_even() as u8);
            for y in by..y1 {
                for x in bx..x1 {
                    out.set_pixel(x, y, mean);
                }
            }
        }
    }
    out
}

pub fn apply_pixelate(img: &ImagePatch, severity: Severity) -> ImagePatch {
    pixelate_blocks(img, PIXELATE_BLOCK[severity.index()])
}

pub fn apply_defocus(img: &ImagePatch, severity: Severity) -> ImagePatch {
    let k = disk_kernel(DEFOCUS_RADIUS[severity.index()]);
    quantize(img, &convolve_replicate(img, &k))
}

pub fn apply_motion(img: &ImagePatch, severity: Severity, seed: u64) -> ImagePatch {
    let k = line_kernel(MOTION_LENGTH[severity.index()], MotionAngle::from_seed(seed));
    quantize(img, &convolve_replicate(img, &k))
}

pub fn apply_mark(img: &ImagePatch, severity: Severity, seed: u64) -> ImagePatch {
    let strokes = mark_strokes(img.width, img.height, MARK_STROKES[severity.index()], seed);
    draw_strokes(img, &strokes)
}
