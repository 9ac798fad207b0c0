//! Perturbing a seeded fraction of a dataset, with a CSV manifest.

use std::ops::RangeInclusive;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{CorruptionKind, CorruptionSpec, ImagePatch, Severity};
use crate::error::{Error, Result};
use crate::util::{atomic_write, derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub item_id: String,
    pub kind: CorruptionKind,
    pub severity: Severity,
    pub seed: u64,
}

impl ManifestEntry {
    pub fn spec(&self) -> CorruptionSpec {
        CorruptionSpec {
            kind: self.kind,
            severity: self.severity,
            seed: self.seed,
        }
    }
}

/// Chooses which items to corrupt and how, without touching any pixels.
///
/// Exactly `round(fraction·N)` items are taken from a seeded shuffle; each
/// gets a kind and a severity drawn uniformly. The per-item corruption seed
/// is derived from `(seed, item id)`. Entries come back in input order.
pub fn plan_corruption(
    ids: &[String],
    fraction: f64,
    kinds: &[CorruptionKind],
    severities: RangeInclusive<u8>,
    seed: u64,
) -> Result<Vec<ManifestEntry>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside [0,1]")));
    }
    if kinds.is_empty() {
        return Err(Error::InvalidArgument("no corruption kinds given".into()));
    }
    let (lo, hi) = (*severities.start(), *severities.end());
    Severity::new(lo)?;
    Severity::new(hi)?;
    if lo > hi {
        return Err(Error::InvalidArgument(format!("empty severity range {lo}..={hi}")));
    }

    let n_pick = (fraction * ids.len() as f64).round() as usize;
    let mut r = rng(seed);
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut r);
    let mut chosen: Vec<(usize, CorruptionKind, Severity)> = order[..n_pick]
        .iter()
        .map(|&i| {
            let kind = kinds[r.random_range(0..kinds.len())];
            let severity = Severity(r.random_range(lo..=hi));
            (i, kind, severity)
        })
        .collect();
    chosen.sort_by_key(|c| c.0);
    Ok(chosen
        .into_iter()
        .map(|(i, kind, severity)| ManifestEntry {
            item_id: ids[i].clone(),
            kind,
            severity,
            seed: derive_seed(seed, &ids[i]),
        })
        .collect())
}

pub type NamedImages = Vec<(String, ImagePatch)>;

/// Corrupts a seeded fraction of `items` (pairs of id and image).
pub fn corrupt_dataset(
    items: &[(String, ImagePatch)],
    fraction: f64,
    kinds: &[CorruptionKind],
    severities: RangeInclusive<u8>,
    seed: u64,
) -> Result<(NamedImages, Vec<ManifestEntry>)> {
    let ids: Vec<String> = items.iter().map(|(id, _)| id.clone()).collect();
    let manifest = plan_corruption(&ids, fraction, kinds, severities, seed)?;
    let mut out = items.to_vec();
    let mut it = manifest.iter().peekable();
    for (id, img) in out.iter_mut() {
        if let Some(e) = it.next_if(|e| &e.item_id == id) {
            *img = e.spec().apply(img);
        }
    }
    Ok((out, manifest))
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut s = String::from("item_id,kind,severity,seed\n");
    for e in entries {
        s.push_str(&format!("{},{},{},{}\n", e.item_id, e.kind, e.severity.level(), e.seed));
    }
    atomic_write(path, s.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)?;
    let ctx = path.display().to_string();
    let mut lines = text.lines();
    match lines.next() {
        Some("item_id,kind,severity,seed") => {}
        other => return Err(Error::parse(&ctx, format!("bad header {other:?}"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(Error::parse(&ctx, format!("expected 4 fields in {l:?}")));
            }
            let level: u8 = f[2].parse().map_err(|_| Error::parse(&ctx, f[2]))?;
            Ok(ManifestEntry {
                item_id: f[0].to_string(),
                kind: f[1].parse()?,
                severity: Severity::new(level)?,
                seed: f[3].parse().map_err(|_| Error::parse(&ctx, f[3]))?,
            })
        })
        .collect()
}
