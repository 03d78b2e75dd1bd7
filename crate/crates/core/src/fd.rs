//! Finite-difference weights on arbitrary 1-D stencils and derivatives of
//! sampled grid functions.

use std::ops::{Add, Mul};

use crate::grid::GridDomain;

/// Fornberg's algorithm: weights `w[d][j]` such that
/// `f^(d)(z) ~ sum_j w[d][j] f(x[j])` for every `d <= max_order`.
pub fn fornberg_weights(z: f64, x: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Integer offsets and weights (already divided by `h^order`) of a stencil for
/// the `order`-th derivative at index `pos` of an axis with `len` points,
/// using `order + accuracy` points, centred when possible and shifted inwards
/// near the ends.
pub fn axis_stencil(pos: usize, len: usize, order: usize, accuracy: usize, h: f64) -> Vec<(isize, f64)> {
    if order == 0 {
        return vec![(0, 1.0)];
    }
    let npts = (order + accuracy).min(len);
    let half = (npts - 1) / 2;
    let start = pos.saturating_sub(half).min(len - npts);
    let offsets: Vec<isize> = (start..start + npts).map(|i| i as isize - pos as isize).collect();
    let xs: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
    let w = fornberg_weights(0.0, &xs, order);
    let scale = h.powi(order as i32);
    offsets
        .into_iter()
        .zip(w[order].iter())
        .map(|(o, &wi)| (o, wi / scale))
        .collect()
}

/// Mixed partial derivative `d^{a+b+c} f / dx1^a dx2^b dx3^c` of a sampled
/// grid function at a node, by tensor products of 1-D stencils.
pub fn partial<T>(grid: &GridDomain, node: usize, multi: [usize; 3], accuracy: usize, f: impl Fn(usize) -> T) -> T
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let m = grid.m();
    let h = grid.h();
    let p = grid.ijk(node);
    let st: Vec<Vec<(isize, f64)>> = (0..3)
        .map(|a| axis_stencil(p[a], m, multi[a], accuracy, h))
        .collect();
    let mut acc: Option<T> = None;
    for &(o0, w0) in &st[0] {
        for &(o1, w1) in &st[1] {
            for &(o2, w2) in &st[2] {
                let q = grid
                    .offset(node, [o0, o1, o2])
                    .expect("stencil stays on the grid by construction");
                let term = f(q) * (w0 * w1 * w2);
                acc = Some(match acc {
                    Some(a) => a + term,
                    None => term,
                });
            }
        }
    }
    acc.expect("non-empty stencil")
}

/// Second-order accurate gradient of a sampled grid function at a node.
pub fn gradient<T>(grid: &GridDomain, node: usize, f: impl Fn(usize) -> T + Copy) -> [T; 3]
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    [
        partial(grid, node, [1, 0, 0], 2, f),
        partial(grid, node, [0, 1, 0], 2, f),
        partial(grid, node, [0, 0, 1], 2, f),
    ]
}

/// All multi-indices in three variables of total degree `order`, in
/// lexicographic order.
pub fn multi_indices(order: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in (0..=order).rev() {
        for b in (0..=order - a).rev() {
            out.push([a, b, order - a - b]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_central_weights() {
        let w = fornberg_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert!((w[1][0] + 0.5).abs() < 1e-15 && w[1][1].abs() < 1e-15 && (w[1][2] - 0.5).abs() < 1e-15);
        assert!((w[2][0] - 1.0).abs() < 1e-15 && (w[2][1] + 2.0).abs() < 1e-15);
        let w = fornberg_weights(0.0, &[0.0, 1.0, 2.0], 1);
        assert!((w[1][0] + 1.5).abs() < 1e-14 && (w[1][1] - 2.0).abs() < 1e-14 && (w[1][2] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn partial_exact_on_quadratics() {
        let g = GridDomain::new(1.0, 9).unwrap();
        let f: Vec<f64> = (0..g.len())
            .map(|i| {
                let [x, y, z] = g.coords(i);
                x * x + 3.0 * x * y - z * z + 2.0 * z
            })
            .collect();
        for node in [0, g.index(8, 4, 0), g.index(3, 8, 8), g.index(4, 4, 4)] {
            let [x, y, z] = g.coords(node);
            let gr = gradient(&g, node, |i| f[i]);
            assert!((gr[0] - (2.0 * x + 3.0 * y)).abs() < 1e-12);
            assert!((gr[1] - 3.0 * x).abs() < 1e-12);
            assert!((gr[2] - (-2.0 * z + 2.0)).abs() < 1e-12);
            let dxy = partial(&g, node, [1, 1, 0], 2, |i| f[i]);
            assert!((dxy - 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(0), vec![[0, 0, 0]]);
        assert_eq!(multi_indices(1).len(), 3);
        assert_eq!(multi_indices(2).len(), 6);
        assert!(multi_indices(3).iter().all(|m| m.iter().sum::<usize>() == 3));
    }
}
