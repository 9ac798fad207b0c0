//! `PGR1` binary graph files and the plain-text feature matrix format.
//!
//! Graph layout, little-endian:
//!
//! ```text
//! "PGR1" | n_nodes u32 | d u32 | label u32
//!        | grid x of every node (n × i32) | grid y of every node (n × i32)
//!        | edge_count u32 | (u u32, v u32) * edge_count
//!        | features f32[n*d] row-major
//! ```
//!
//! The normalized adjacency is not stored; it is rebuilt from the edges.
//! Feature files hold a first line `N d` followed by N lines of d reals.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use super::PatchGraph;
use crate::error::{Error, Result};
use crate::numcore::{read_u32, truncated};
use crate::util::atomic_write;

pub const GRAPH_MAGIC: &[u8; 4] = b"PGR1";

pub fn encode_graph(g: &PatchGraph) -> Vec<u8> {
    let (n, d) = g.features.dim();
    let mut b = Vec::with_capacity(16 + n * 8 + g.edges.len() * 8 + n * d * 4 + 4);
    b.extend_from_slice(GRAPH_MAGIC);
    for v in [n as u32, d as u32, g.label as u32] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    for &(x, _) in &g.coords {
        b.extend_from_slice(&x.to_le_bytes());
    }
    for &(_, y) in &g.coords {
        b.extend_from_slice(&y.to_le_bytes());
    }
    b.extend_from_slice(&(g.edges.len() as u32).to_le_bytes());
    for &(u, v) in &g.edges {
        b.extend_from_slice(&(u as u32).to_le_bytes());
        b.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for x in g.features.iter() {
        b.extend_from_slice(&(*x as f32).to_le_bytes());
    }
    b
}

pub fn decode_graph<R: Read>(mut r: R, id: impl Into<String>) -> Result<PatchGraph> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != GRAPH_MAGIC {
        return Err(Error::Format(format!("bad graph magic {magic:?}")));
    }
    let n = read_u32(&mut r)? as usize;
    let d = read_u32(&mut r)? as usize;
    let label = read_u32(&mut r)? as usize;
    let mut read_i32s =
        |count: usize| -> Result<Vec<i32>> { (0..count).map(|_| read_u32(&mut r).map(|v| v as i32)).collect() };
    let xs = read_i32s(n)?;
    let ys = read_i32s(n)?;
    let coords = xs.into_iter().zip(ys).collect();
    let m = read_u32(&mut r)? as usize;
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let u = read_u32(&mut r)? as usize;
        let v = read_u32(&mut r)? as usize;
        edges.push((u, v));
    }
    let mut raw = vec![0u8; n * d * 4];
    r.read_exact(&mut raw).map_err(truncated)?;
    let vals = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let features = Array2::from_shape_vec((n, d), vals).expect("length matches");
    PatchGraph::new(id, label, features, coords, edges)
}

pub fn write_graph(path: &Path, g: &PatchGraph) -> Result<()> {
    atomic_write(path, &encode_graph(g))
}

/// Reads a graph file; the graph id is the file stem.
pub fn read_graph(path: &Path) -> Result<PatchGraph> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_graph(&std::fs::read(path)?[..], id)
}

pub fn save_features(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut s = format!("{} {}\n", m.nrows(), m.ncols());
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    atomic_write(path, s.as_bytes())
}

pub fn parse_features(text: &str, context: &str) -> Result<Array2<f64>> {
    let mut tokens = text.split_whitespace();
    let mut next_usize = |what: &str| -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| Error::parse(context, format!("missing {what}")))?
            .parse()
            .map_err(|_| Error::parse(context, format!("bad {what}")))
    };
    let n = next_usize("row count")?;
    let d = next_usize("column count")?;
    let vals = tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::parse(context, format!("bad value {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if vals.len() != n * d {
        return Err(Error::parse(
            context,
            format!("expected {} values for {n}x{d}, found {}", n * d, vals.len()),
        ));
    }
    Ok(Array2::from_shape_vec((n, d), vals).expect("length checked"))
}

pub fn load_features(path: &Path) -> Result<Array2<f64>> {
    let mut text = String::new();
    std::fs::File::open(path)
        .map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::Missing(path.to_path_buf())
            } else {
                e.into()
            }
        })?
        .read_to_string(&mut text)?;
    parse_features(&text, &path.display().to_string())
}
