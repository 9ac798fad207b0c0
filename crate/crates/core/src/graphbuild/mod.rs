//! Patch graphs: tiling, per-patch features, spatial k-NN edges and the
//! symmetric-normalized adjacency `D̃^{-1/2}(A+I)D̃^{-1/2}`.

mod features;
mod io;

use ndarray::Array2;

use crate::corruption::ImagePatch;
use crate::error::{Error, Result};

pub use features::{toy_featurize, FEATURE_DIM, GRAD_BINS, HIST_BINS};
pub use io::{
    decode_graph, encode_graph, load_features, parse_features, read_graph, save_features, write_graph, GRAPH_MAGIC,
};

pub const DEFAULT_PATCH_SIDE: usize = 256;
pub const DEFAULT_K: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchGraph {
    pub id: String,
    pub label: usize,
    pub features: Array2<f64>,
    pub coords: Vec<(i32, i32)>,
    /// Undirected, `u < v`, sorted, no duplicates.
    pub edges: Vec<(usize, usize)>,
    pub adjacency_norm: Array2<f64>,
}

impl PatchGraph {
    /// Assembles a graph; the edge list is canonicalized and the adjacency
    /// derived from it.
    pub fn new(
        id: impl Into<String>,
        label: usize,
        features: Array2<f64>,
        coords: Vec<(i32, i32)>,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let n = features.nrows();
        if coords.len() != n {
            return Err(Error::shape("PatchGraph coords", features.dim(), (coords.len(), 2)));
        }
        let edges = canonical_edges(edges, n)?;
        let adjacency_norm = normalized_adjacency(&edges, n);
        Ok(Self {
            id: id.into(),
            label,
            features,
            coords,
            edges,
            adjacency_norm,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Replaces the node features with an externally computed matrix.
    pub fn attach_features(&mut self, features: Array2<f64>) -> Result<()> {
        if features.nrows() != self.n_nodes() {
            return Err(Error::shape(
                "attach_features",
                (self.n_nodes(), self.feature_dim()),
                features.dim(),
            ));
        }
        self.features = features;
        Ok(())
    }

    /// Graph with nodes relabeled so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_nodes();
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inv[old] != usize::MAX {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
            inv[old] = new;
        }
        if perm.len() != n {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        let features = self.features.select(ndarray::Axis(0), perm);
        let coords = perm.iter().map(|&o| self.coords[o]).collect();
        let edges = self.edges.iter().map(|&(u, v)| (inv[u], inv[v])).collect();
        Self::new(self.id.clone(), self.label, features, coords, edges)
    }
}

fn canonical_edges(edges: Vec<(usize, usize)>, n: usize) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(edges.len());
    for (u, v) in edges {
        if u >= n || v >= n {
            return Err(Error::InvalidArgument(format!(
                "edge ({u},{v}) out of range for {n} nodes"
            )));
        }
        if u == v {
            return Err(Error::InvalidArgument(format!("self-loop on node {u}")));
        }
        out.push((u.min(v), u.max(v)));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Cuts `floor(W/side) x floor(H/side)` non-overlapping patches in row-major
/// grid order, dropping the right and bottom remainders.
pub fn tile(image: &ImagePatch, side: usize) -> Result<Vec<ImagePatch>> {
    if side == 0 || image.width < side || image.height < side {
        return Err(Error::InvalidArgument(format!(
            "{}x{} image is smaller than one {side}x{side} patch",
            image.width, image.height
        )));
    }
    let (gw, gh) = (image.width / side, image.height / side);
    let mut out = Vec::with_capacity(gw * gh);
    for gy in 0..gh {
        for gx in 0..gw {
            let mut px = Vec::with_capacity(side * side * 3);
            for y in gy * side..(gy + 1) * side {
                let start = (y * image.width + gx * side) * 3;
                px.extend_from_slice(&image.pixels[start..start + side * 3]);
            }
            out.push(ImagePatch {
                width: side,
                height: side,
                pixels: px,
                grid_x: gx as u32,
                grid_y: gy as u32,
            });
        }
    }
    Ok(out)
}

/// Inverse of [`tile`] for patches covering a full grid.
pub fn reassemble(patches: &[ImagePatch]) -> Result<ImagePatch> {
    let first = patches
        .first()
        .ok_or_else(|| Error::InvalidArgument("no patches".into()))?;
    let side = first.width;
    let gw = patches.iter().map(|p| p.grid_x).max().unwrap_or(0) as usize + 1;
    let gh = patches.iter().map(|p| p.grid_y).max().unwrap_or(0) as usize + 1;
    let mut img = ImagePatch::filled(gw * side, gh * side, [0, 0, 0]);
    for p in patches {
        if p.width != side || p.height != side {
            return Err(Error::InvalidArgument("patches differ in size".into()));
        }
        for y in 0..side {
            let dst = ((p.grid_y as usize * side + y) * img.width + p.grid_x as usize * side) * 3;
            img.pixels[dst..dst + side * 3].copy_from_slice(&p.pixels[y * side * 3..(y + 1) * side * 3]);
        }
    }
    Ok(img)
}

/// Undirected k-NN edges on grid coordinates.
///
/// Each node links to its `k` nearest other nodes by Euclidean distance,
/// ties going to the smaller node index; the directed picks are then
/// symmetrized and deduplicated. `k` above `n-1` is clamped.
pub fn knn_graph(coords: &[(i32, i32)], k: usize) -> Result<Vec<(usize, usize)>> {
    let n = coords.len();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("k-NN needs at least 2 nodes, got {n}")));
    }
    let k = k.min(n - 1);
    let mut edges = Vec::with_capacity(n * k);
    let mut cand: Vec<(i64, usize)> = Vec::with_capacity(n);
    for (i, &(xi, yi)) in coords.iter().enumerate() {
        cand.clear();
        for (j, &(xj, yj)) in coords.iter().enumerate() {
            if j != i {
                let (dx, dy) = (i64::from(xi - xj), i64::from(yi - yj));
                // squared integer distance orders exactly like the Euclidean one
                cand.push((dx * dx + dy * dy, j));
            }
        }
        cand.sort_unstable();
        for &(_, j) in &cand[..k] {
            edges.push((i.min(j), i.max(j)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}

/// Dense `D̃^{-1/2}(A+I)D̃^{-1/2}` for an undirected edge list.
pub fn normalized_adjacency(edges: &[(usize, usize)], n_nodes: usize) -> Array2<f64> {
    let mut a = Array2::<f64>::eye(n_nodes);
    for &(u, v) in edges {
        a[[u, v]] = 1.0;
        a[[v, u]] = 1.0;
    }
    let deg: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    for ((i, j), v) in a.indexed_iter_mut() {
        if *v != 0.0 {
            *v /= (deg[i] * deg[j]).sqrt();
        }
    }
    a
}

/// Tiles, featurizes and connects one image.
pub fn build_patch_graph(
    image: &ImagePatch,
    id: impl Into<String>,
    label: usize,
    patch_side: usize,
    k: usize,
) -> Result<PatchGraph> {
    let patches = tile(image, patch_side)?;
    let n = patches.len();
    let mut features = Array2::zeros((n, FEATURE_DIM));
    for (i, p) in patches.iter().enumerate() {
        for (j, v) in toy_featurize(p).into_iter().enumerate() {
            features[[i, j]] = v;
        }
    }
    let coords: Vec<(i32, i32)> = patches.iter().map(|p| (p.grid_x as i32, p.grid_y as i32)).collect();
    let edges = if n >= 2 { knn_graph(&coords, k)? } else { Vec::new() };
    PatchGraph::new(id, label, features, coords, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn tile_counts_and_coords() {
        let img = ImagePatch::filled(512, 512, [1, 2, 3]);
        let t = tile(&img, 256).unwrap();
        let coords: Vec<_> = t.iter().map(|p| (p.grid_x, p.grid_y)).collect();
        assert_eq!(coords, vec![(0, 0), (1, 0), (0, 1), (1, 1)]);
        assert_eq!(tile(&ImagePatch::filled(600, 600, [0; 3]), 256).unwrap().len(), 4);
        assert_eq!(tile(&ImagePatch::filled(256, 256, [0; 3]), 256).unwrap().len(), 1);
        assert!(tile(&ImagePatch::filled(255, 400, [0; 3]), 256).is_err());
    }

    #[test]
    fn tile_reassemble_is_exact() {
        let px: Vec<u8> = (0..12 * 8 * 3).map(|i| (i * 31 % 251) as u8).collect();
        let img = ImagePatch::new(12, 8, px).unwrap();
        assert_eq!(reassemble(&tile(&img, 4).unwrap()).unwrap(), img);
    }

    #[test]
    fn knn_small_cases() {
        assert_eq!(knn_graph(&[(0, 0), (5, 5)], 1).unwrap(), vec![(0, 1)]);
        let pts: Vec<_> = (0..6).map(|i| (i * 3 % 5, i)).collect();
        assert_eq!(knn_graph(&pts, 9).unwrap().len(), 15);
        assert_eq!(knn_graph(&[(0, 0), (1, 0), (3, 0)], 1).unwrap(), vec![(0, 1), (1, 2)]);
        assert!(knn_graph(&[(0, 0)], 1).is_err());
        assert!(knn_graph(&[(0, 0), (1, 1)], 0).is_err());
    }

    #[test]
    fn knn_ties_prefer_smaller_index() {
        // node 0 at the center, nodes 1..=4 all at distance 1
        let pts = [(0, 0), (1, 0), (0, 1), (-1, 0), (0, -1)];
        let e = knn_graph(&pts, 1).unwrap();
        // node 0's only pick is node 1; the others all pick node 0
        assert_eq!(e, vec![(0, 1), (0, 2), (0, 3), (0, 4)]);
    }

    #[test]
    fn adjacency_small_cases() {
        assert_eq!(normalized_adjacency(&[], 1), array![[1.0]]);
        assert_eq!(normalized_adjacency(&[(0, 1)], 2), array![[0.5, 0.5], [0.5, 0.5]]);
        let iso = normalized_adjacency(&[(0, 1)], 3);
        assert_eq!(iso[[2, 2]], 1.0);
    }

    #[test]
    fn graph_rejects_bad_edges_and_dedups() {
        let f = Array2::zeros((3, 2));
        let c = vec![(0, 0), (1, 0), (2, 0)];
        assert!(PatchGraph::new("g", 0, f.clone(), c.clone(), vec![(0, 3)]).is_err());
        assert!(PatchGraph::new("g", 0, f.clone(), c.clone(), vec![(1, 1)]).is_err());
        let g = PatchGraph::new("g", 0, f, c, vec![(1, 0), (0, 1), (2, 1)]).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn attach_checks_rows() {
        let img = ImagePatch::filled(512, 256, [50, 60, 70]);
        let mut g = build_patch_graph(&img, "x", 1, 256, 8).unwrap();
        assert_eq!(g.n_nodes(), 2);
        assert!(g.attach_features(Array2::zeros((3, 5))).is_err());
        g.attach_features(Array2::ones((2, 5))).unwrap();
        assert_eq!(g.feature_dim(), 5);
    }
}
