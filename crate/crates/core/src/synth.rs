//! Synthetic tissue-like dataset and on-disk image collections.
//!
//! Each image is a pink-to-purple stroma background with smooth banding,
//! pixel noise and dark nuclei. Higher classes are more purple and denser in
//! nuclei. An image is a pure function of `(seed, index)`.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::corruption::ImagePatch;
use crate::error::{Error, Result};
use crate::imageio::read_png;
use crate::trainer::ImageSource;
use crate::util::{atomic_write, derive_seed, rng};

pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub n_per_class: usize,
    pub n_classes: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_per_class: 40,
            n_classes: 5,
            width: 1024,
            height: 1024,
            seed: 0,
        }
    }
}

const STROMA_LOW: [f64; 3] = [236.0, 168.0, 196.0];
const STROMA_HIGH: [f64; 3] = [168.0, 112.0, 192.0];
const NUCLEUS: [f64; 3] = [72.0, 40.0, 112.0];

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

impl SynthConfig {
    pub fn len(&self) -> usize {
        self.n_per_class * self.n_classes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self, index: usize) -> String {
        format!("img{index:04}")
    }

    pub fn label(&self, index: usize) -> usize {
        index / self.n_per_class
    }

    pub fn generate(&self, index: usize) -> ImagePatch {
        let (w, h) = (self.width, self.height);
        let mut r = rng(derive_seed(self.seed, &self.id(index)));
        let t = if self.n_classes > 1 {
            self.label(index) as f64 / (self.n_classes - 1) as f64
        } else {
            0.0
        };

        let base: Vec<f64> = (0..3)
            .map(|c| STROMA_LOW[c] + t * (STROMA_HIGH[c] - STROMA_LOW[c]) + r.random_range(-8.0..8.0))
            .collect();
        let fx = r.random_range(2.0..6.0) * TAU / w as f64;
        let fy = r.random_range(2.0..6.0) * TAU / h as f64;
        let (px, py) = (r.random_range(0.0..TAU), r.random_range(0.0..TAU));
        let wave_x: Vec<f64> = (0..w).map(|x| (x as f64 * fx + px).sin()).collect();
        let wave_y: Vec<f64> = (0..h).map(|y| (y as f64 * fy + py).sin()).collect();

        let mut pixels = Vec::with_capacity(w * h * 3);
        for wy in &wave_y {
            for wx in &wave_x {
                let band = 10.0 * wx * wy;
                let noise: u32 = r.random();
                for (c, b) in base.iter().enumerate() {
                    let n = ((noise >> (8 * c)) & 0xff) as f64 / 255.0 * 12.0 - 6.0;
                    pixels.push(clamp_u8(b + band + n));
                }
            }
        }
        let mut img = ImagePatch::new(w, h, pixels).expect("sized buffer");

        let per_megapixel = (150.0 + 450.0 * t) * r.random_range(0.8..1.2);
        let count = (per_megapixel * (w * h) as f64 / 1e6).round() as usize;
        for _ in 0..count {
            let cx = r.random_range(0.0..w as f64);
            let cy = r.random_range(0.0..h as f64);
            let rad: f64 = r.random_range(3.0..7.0);
            let shade = r.random_range(-15.0..15.0);
            let color = NUCLEUS.map(|v| clamp_u8(v + shade));
            let (x0, x1) = (
                (cx - rad).floor().max(0.0) as usize,
                ((cx + rad).ceil() as usize).min(w),
            );
            let (y0, y1) = (
                (cy - rad).floor().max(0.0) as usize,
                ((cy + rad).ceil() as usize).min(h),
            );
            for y in y0..y1 {
                for x in x0..x1 {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    if dx * dx + dy * dy <= rad * rad {
                        img.set_pixel(x, y, color);
                    }
                }
            }
        }
        img
    }

    pub fn labels(&self) -> Vec<(String, usize)> {
        (0..self.len()).map(|i| (self.id(i), self.label(i))).collect()
    }
}

impl ImageSource for SynthConfig {
    fn len(&self) -> usize {
        SynthConfig::len(self)
    }

    fn id(&self, index: usize) -> String {
        SynthConfig::id(self, index)
    }

    fn label(&self, index: usize) -> usize {
        SynthConfig::label(self, index)
    }

    fn image(&self, index: usize) -> Result<ImagePatch> {
        Ok(self.generate(index))
    }
}

pub fn write_labels(path: &Path, labels: &[(String, usize)]) -> Result<()> {
    let mut s = String::from("id,label\n");
    for (id, label) in labels {
        let _ = writeln!(s, "{id},{label}");
    }
    atomic_write(path, s.as_bytes())
}

pub fn read_labels(path: &Path) -> Result<Vec<(String, usize)>> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let ctx = path.display().to_string();
    let mut lines = text.lines();
    if lines.next() != Some("id,label") {
        return Err(Error::parse(&ctx, "expected header id,label"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (id, label) = l
                .split_once(',')
                .ok_or_else(|| Error::parse(&ctx, format!("bad row {l:?}")))?;
            let label = label
                .trim()
                .parse()
                .map_err(|_| Error::parse(&ctx, format!("bad label in {l:?}")))?;
            Ok((id.trim().to_string(), label))
        })
        .collect()
}

/// `labels.csv` plus one `<id>.png` per row.
#[derive(Debug, Clone)]
pub struct PngDir {
    pub dir: PathBuf,
    pub items: Vec<(String, usize)>,
}

impl PngDir {
    pub fn open(dir: &Path) -> Result<Self> {
        Ok(Self {
            dir: dir.to_path_buf(),
            items: read_labels(&dir.join(LABELS_FILE))?,
        })
    }

    pub fn path(&self, index: usize) -> PathBuf {
        self.dir.join(format!("{}.png", self.items[index].0))
    }
}

impl ImageSource for PngDir {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn id(&self, index: usize) -> String {
        self.items[index].0.clone()
    }

    fn label(&self, index: usize) -> usize {
        self.items[index].1
    }

    fn image(&self, index: usize) -> Result<ImagePatch> {
        read_png(&self.path(index))
    }
}
