//! Oracles and helpers shared by the integration tests.

#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rgp_core::corruption::ImagePatch;
use rgp_core::graphbuild::PatchGraph;
use rgp_core::numcore::{BoundParams, ParamSet, Tensor};

pub const FD_EPS: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(r: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.0..1.0))
}

pub fn random_image(r: &mut impl Rng, w: usize, h: usize) -> ImagePatch {
    let pixels = (0..w * h * 3).map(|_| r.random()).collect();
    ImagePatch::new(w, h, pixels).unwrap()
}

pub fn random_edges(r: &mut impl Rng, n: usize) -> Vec<(usize, usize)> {
    let p: f64 = r.random_range(0.05..0.6);
    let mut e = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random_bool(p) {
                e.push((u, v));
            }
        }
    }
    e
}

pub fn random_graph(r: &mut impl Rng, n: usize, d: usize, label: usize) -> PatchGraph {
    let coords = (0..n).map(|i| (i as i32, 0)).collect();
    PatchGraph::new("g", label, randn(r, n, d), coords, random_edges(r, n)).unwrap()
}

pub fn permutation(r: &mut impl Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(r);
    p
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Worst relative error, over all parameters, between the backward-pass
/// gradient and central differences of `⟨f(params), R⟩` for a fixed random `R`.
pub fn grad_check(params: &ParamSet, seed: u64, f: impl Fn(&BoundParams) -> Tensor) -> f64 {
    let probe = f(&params.bind());
    let weights = randn(&mut rng(seed ^ 0x5eed), probe.rows(), probe.cols());
    let scalar = |ps: &ParamSet| -> f64 { (f(&ps.bind()).value() * &weights).sum() };

    let bound = params.bind();
    let out = f(&bound);
    let loss = rgp_core::numcore::sum(&rgp_core::numcore::mul(&out, &Tensor::constant(weights.clone())).unwrap());
    loss.backward().unwrap();
    let analytic = bound.grads();

    let mut worst: f64 = 0.0;
    let mut probe_ps = params.clone();
    for (p, ga) in analytic.iter().enumerate() {
        let mut numeric = Array2::zeros(ga.dim());
        for idx in 0..ga.len() {
            let (i, j) = (idx / ga.ncols(), idx % ga.ncols());
            let orig = probe_ps.values()[p][[i, j]];
            probe_ps.values_mut()[p][[i, j]] = orig + FD_EPS;
            let up = scalar(&probe_ps);
            probe_ps.values_mut()[p][[i, j]] = orig - FD_EPS;
            let down = scalar(&probe_ps);
            probe_ps.values_mut()[p][[i, j]] = orig;
            numeric[[i, j]] = (up - down) / (2.0 * FD_EPS);
        }
        let denom = norm(ga).max(norm(&numeric)).max(1e-7);
        worst = worst.max(norm(&(ga - &numeric)) / denom);
    }
    worst
}

pub fn param_set(named: &[(&str, Array2<f64>)]) -> ParamSet {
    let mut ps = ParamSet::new();
    for (n, v) in named {
        ps.insert(*n, v.clone());
    }
    ps
}

/// Dense `D^{-1/2}(A+I)D^{-1/2}` computed entry by entry.
pub fn brute_adjacency(edges: &[(usize, usize)], n: usize) -> Array2<f64> {
    let mut a = vec![vec![0.0f64; n]; n];
    for &(u, v) in edges {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let d: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let mut dinv = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        dinv[i][i] = 1.0 / d[i].sqrt();
    }
    let mul = |x: &Vec<Vec<f64>>, y: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| x[i][k] * y[k][j]).sum()).collect())
            .collect()
    };
    let m = mul(&mul(&dinv, &a), &dinv);
    Array2::from_shape_fn((n, n), |(i, j)| m[i][j])
}

/// Quadratic-weighted kappa straight from its definition.
pub fn kappa_oracle(o: &[Vec<f64>]) -> f64 {
    let c = o.len();
    let total: f64 = o.iter().flatten().sum();
    let rows: Vec<f64> = o.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..c).map(|j| o.iter().map(|r| r[j]).sum()).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..c {
        for j in 0..c {
            let w = ((i as f64 - j as f64) / (c as f64 - 1.0)).powi(2);
            num += w * o[i][j] / total;
            den += w * rows[i] * cols[j] / (total * total);
        }
    }
    1.0 - num / den
}

/// RGB in [0,1] to HSV with hue in [0,1).
pub fn oracle_rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let hi = r.max(g).max(b);
    let lo = r.min(g).min(b);
    if hi == lo {
        return (0.0, 0.0, hi);
    }
    let s = (hi - lo) / hi;
    let rc = (hi - r) / (hi - lo);
    let gc = (hi - g) / (hi - lo);
    let bc = (hi - b) / (hi - lo);
    let h = if r == hi {
        bc - gc
    } else if g == hi {
        2.0 + rc - bc
    } else {
        4.0 + gc - rc
    };
    ((h / 6.0).rem_euclid(1.0), s, hi)
}

pub fn oracle_hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    if s == 0.0 {
        return (v, v, v);
    }
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match (i as i64).rem_euclid(6) {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Applies `f` to every pixel's HSV triple and rounds back to 8 bits.
pub fn hsv_map(img: &ImagePatch, f: impl Fn(f64, f64, f64) -> (f64, f64, f64)) -> ImagePatch {
    let mut out = img.clone();
    for px in out.pixels.chunks_exact_mut(3) {
        let (h, s, v) = oracle_rgb_to_hsv(px[0] as f64 / 255.0, px[1] as f64 / 255.0, px[2] as f64 / 255.0);
        if s == 0.0 {
            continue;
        }
        let (h, s, v) = f(h, s, v);
        let (r, g, b) = oracle_hsv_to_rgb(h, s, v);
        px[0] = (r * 255.0).round() as u8;
        px[1] = (g * 255.0).round() as u8;
        px[2] = (b * 255.0).round() as u8;
    }
    out
}

/// Unrounded filter response with clamped source coordinates.
pub fn oracle_filter(img: &ImagePatch, offsets: &[(i64, i64)]) -> Vec<f64> {
    let (w, h) = (img.width as i64, img.height as i64);
    let mut out = Vec::with_capacity(img.pixels.len());
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let total: f64 = offsets
                    .iter()
                    .map(|&(dx, dy)| {
                        let sx = (x + dx).max(0).min(w - 1) as usize;
                        let sy = (y + dy).max(0).min(h - 1) as usize;
                        img.pixels[(sy * img.width + sx) * 3 + c] as f64
                    })
                    .sum();
                out.push(total / offsets.len() as f64);
            }
        }
    }
    out
}

pub fn disk_offsets(r: i64) -> Vec<(i64, i64)> {
    let mut v = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                v.push((dx, dy));
            }
        }
    }
    v
}

/// Line of `len` taps through the origin at `degrees` (y axis pointing down).
pub fn line_offsets(len: i64, degrees: f64) -> Vec<(i64, i64)> {
    let (s, c) = degrees.to_radians().sin_cos();
    let (ux, uy) = (c.round() as i64, -(s.round() as i64));
    (-(len / 2)..=len / 2).map(|t| (t * ux, t * uy)).collect()
}

pub fn round_all(values: &[f64]) -> Vec<u8> {
    values.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()
}
