//! Finite-difference Dirichlet solver for `-div(K grad u) + (mu_a - ik) u = f`
//! on the cube, written as the real two-component system with block
//! coefficients `C = [[K_R, -K_I], [K_I, K_R]]` and `q = [[mu_a, k], [-k, mu_a]]`.
//!
//! The discrete operator comes from a cell-wise energy form. In every grid cell
//! the diagonal entries `K^{dd}` act on the four cell edges parallel to axis
//! `d` with the arithmetic mean of the two end values, the off-diagonal entries
//! couple cell-averaged gradients, and the reaction term is lumped onto the
//! corners. For diagonal `K` the interior stencil is the conservative 7-point
//! scheme with face-averaged coefficients. Interior rows divided by `h^3`
//! approximate the differential operator pointwise.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::grid::{ComplexField, GridDomain};
use crate::medium::{split_real_imag, OpticalMedium};
use crate::{Error, Result, C64};

/// Relative algebraic residual every solve must reach.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Position of offset `d in {-1,0,1}^3` inside a 27-point stencil.
#[inline]
pub fn stencil_slot(d: [isize; 3]) -> usize {
    ((d[0] + 1) * 9 + (d[1] + 1) * 3 + (d[2] + 1)) as usize
}

#[inline]
fn slot_offset(s: usize) -> [isize; 3] {
    [(s / 9) as isize - 1, ((s / 3) % 3) as isize - 1, (s % 3) as isize - 1]
}

#[inline]
fn corner_offset(c: usize) -> [usize; 3] {
    [(c >> 2) & 1, (c >> 1) & 1, c & 1]
}

/// Assembled operator with a factorization of the free-node block.
pub struct DiscreteOperator {
    pub grid: GridDomain,
    pub include_reaction: bool,
    pub tolerance: f64,
    active: Vec<bool>,
    /// Unnormalized energy-form rows of every active node.
    rows: Vec<[C64; 27]>,
    free: Vec<usize>,
    dirichlet: Vec<usize>,
    matrix: SparseColMat<usize, f64>,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for DiscreteOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteOperator")
            .field("grid", &self.grid)
            .field("include_reaction", &self.include_reaction)
            .field("free", &self.free.len())
            .field("dirichlet", &self.dirichlet.len())
            .finish()
    }
}

/// Assemble on the whole cube; Dirichlet nodes are the cube boundary.
pub fn assemble(medium: &OpticalMedium, include_reaction: bool) -> Result<DiscreteOperator> {
    assemble_masked(medium, include_reaction, vec![true; medium.grid.len()])
}

/// Assemble on the union of grid cells whose eight corners are all active.
/// Active nodes touching an inactive cell or the cube boundary carry
/// Dirichlet data.
pub fn assemble_masked(medium: &OpticalMedium, include_reaction: bool, active: Vec<bool>) -> Result<DiscreteOperator> {
    let grid = medium.grid;
    if active.len() != grid.len() {
        return Err(Error::Shape("active mask length".into()));
    }
    let field = split_real_imag(medium)?;
    for (i, kr) in field.k_r.iter().enumerate() {
        if !active[i] {
            continue;
        }
        let e = kr.symmetric_eigenvalues().min();
        if !(e > 0.0) {
            return Err(Error::Ellipticity {
                node: i,
                detail: format!("smallest eigenvalue of K_R is {e:e}"),
            });
        }
    }
    let q: Vec<C64> = if include_reaction {
        medium.mu_a.iter().map(|&a| C64::new(a, -medium.k())).collect()
    } else {
        vec![ZERO; grid.len()]
    };
    let m = grid.m();
    let h = grid.h();

    let cell_active = |lower: [usize; 3]| -> bool {
        lower.iter().all(|&c| c + 1 < m)
            && (0..8).all(|c| {
                let o = corner_offset(c);
                active[grid.index(lower[0] + o[0], lower[1] + o[1], lower[2] + o[2])]
            })
    };

    let rows: Vec<[C64; 27]> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let mut row = [ZERO; 27];
            if !active[p] {
                return row;
            }
            let ijk = grid.ijk(p);
            for local in 0..8 {
                let o = corner_offset(local);
                if (0..3).any(|a| ijk[a] < o[a]) {
                    continue;
                }
                let lower = [ijk[0] - o[0], ijk[1] - o[1], ijk[2] - o[2]];
                if !cell_active(lower) {
                    continue;
                }
                let corners: [usize; 8] = std::array::from_fn(|c| {
                    let co = corner_offset(c);
                    grid.index(lower[0] + co[0], lower[1] + co[1], lower[2] + co[2])
                });
                let cm = cell_matrix(h, &corners.map(|c| field.k[c]), &corners.map(|c| q[c]));
                for (j, &v) in cm[local].iter().enumerate() {
                    let oj = corner_offset(j);
                    let d = [0, 1, 2].map(|a| oj[a] as isize - o[a] as isize);
                    row[stencil_slot(d)] += v;
                }
            }
            row
        })
        .collect();

    let mut is_dirichlet = vec![false; grid.len()];
    for p in 0..grid.len() {
        if !active[p] {
            continue;
        }
        let ijk = grid.ijk(p);
        let on_cube = ijk.iter().any(|&c| c == 0 || c + 1 == m);
        let touches_inactive = !on_cube
            && (0..8).any(|local| {
                let o = corner_offset(local);
                !cell_active([ijk[0] - o[0], ijk[1] - o[1], ijk[2] - o[2]])
            });
        is_dirichlet[p] = on_cube || touches_inactive;
    }
    let free: Vec<usize> = (0..grid.len()).filter(|&p| active[p] && !is_dirichlet[p]).collect();
    let dirichlet: Vec<usize> = (0..grid.len()).filter(|&p| is_dirichlet[p]).collect();
    if free.is_empty() {
        return Err(Error::domain("no free nodes in the active region"));
    }
    let mut free_pos = vec![usize::MAX; grid.len()];
    for (r, &p) in free.iter().enumerate() {
        free_pos[p] = r;
    }

    let mut triplets = Vec::with_capacity(free.len() * 27 * 4);
    for (r, &p) in free.iter().enumerate() {
        for (s, &c) in rows[p].iter().enumerate() {
            if c == ZERO {
                continue;
            }
            let Some(qn) = grid.offset(p, slot_offset(s)) else { continue };
            let col = free_pos[qn];
            if col == usize::MAX {
                continue;
            }
            triplets.push(Triplet::new(2 * r, 2 * col, c.re));
            triplets.push(Triplet::new(2 * r, 2 * col + 1, -c.im));
            triplets.push(Triplet::new(2 * r + 1, 2 * col, c.im));
            triplets.push(Triplet::new(2 * r + 1, 2 * col + 1, c.re));
        }
    }
    let nf = 2 * free.len();
    let matrix = SparseColMat::<usize, f64>::try_new_from_triplets(nf, nf, &triplets)
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let lu = matrix
        .sp_lu()
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;

    Ok(DiscreteOperator {
        grid,
        include_reaction,
        tolerance: DEFAULT_TOLERANCE,
        active,
        rows,
        free,
        dirichlet,
        matrix,
        lu,
    })
}

/// Interior 27-point row of `-div(K grad u)` for a constant tensor, scaled so
/// that applying it to nodal values gives the operator value (no `h^3` factor).
pub fn constant_stencil(h: f64, k: &Matrix3<C64>) -> [C64; 27] {
    let cm = cell_matrix(h, &[*k; 8], &[ZERO; 8]);
    let mut row = [ZERO; 27];
    for local in 0..8 {
        let o = corner_offset(local);
        for (j, &v) in cm[local].iter().enumerate() {
            let oj = corner_offset(j);
            let d = [0, 1, 2].map(|a| oj[a] as isize - o[a] as isize);
            row[stencil_slot(d)] += v;
        }
    }
    let scale = h.powi(-3);
    row.map(|v| v * scale)
}

/// Apply a 27-point row at node `p`; `None` if the stencil leaves the grid.
pub fn apply_stencil(grid: &GridDomain, row: &[C64; 27], u: &[C64], p: usize) -> Option<C64> {
    let mut s = ZERO;
    for (slot, &c) in row.iter().enumerate() {
        s += c * u[grid.offset(p, slot_offset(slot))?];
    }
    Some(s)
}

/// Local 8x8 matrix of the energy form on one cell, rows indexed by the test
/// corner.
fn cell_matrix(h: f64, k: &[Matrix3<C64>; 8], q: &[C64; 8]) -> [[C64; 8]; 8] {
    let mut out = [[ZERO; 8]; 8];
    for d in 0..3 {
        let bit = 4 >> d;
        for a in 0..8 {
            if a & bit != 0 {
                continue;
            }
            let b = a | bit;
            let w = (k[a][(d, d)] + k[b][(d, d)]) * (0.25 * h * 0.5);
            out[a][a] += w;
            out[b][b] += w;
            out[a][b] -= w;
            out[b][a] -= w;
        }
    }
    let mut kc = Matrix3::<C64>::zeros();
    for kk in k {
        kc += kk;
    }
    kc /= C64::new(8.0, 0.0);
    if (0..3).any(|d| (0..3).any(|e| d != e && kc[(d, e)] != ZERO)) {
        let sign = |c: usize, d: usize| if c & (4 >> d) != 0 { 1.0 } else { -1.0 };
        for i in 0..8 {
            for j in i..8 {
                let mut s = ZERO;
                for d in 0..3 {
                    for e in 0..3 {
                        if d != e {
                            s += kc[(d, e)] * (sign(j, d) * sign(i, e));
                        }
                    }
                }
                let v = s * (h / 16.0);
                out[i][j] += v;
                if i != j {
                    out[j][i] += v;
                }
            }
        }
    }
    let mass = h.powi(3) / 8.0;
    for i in 0..8 {
        out[i][i] += q[i] * mass;
    }
    out
}

impl DiscreteOperator {
    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    pub fn dirichlet_nodes(&self) -> &[usize] {
        &self.dirichlet
    }

    pub fn is_active(&self, p: usize) -> bool {
        self.active[p]
    }

    pub fn stencil(&self, p: usize) -> &[C64; 27] {
        &self.rows[p]
    }

    /// Real block matrix over the free unknowns, interleaved `(Re, Im)`.
    pub fn matrix(&self) -> &SparseColMat<usize, f64> {
        &self.matrix
    }

    /// Unnormalized energy-form product `(A u)_p` at every active node.
    pub fn energy_apply(&self, u: &[C64]) -> Vec<C64> {
        let g = self.grid;
        (0..g.len())
            .into_par_iter()
            .map(|p| {
                if !self.active[p] {
                    return ZERO;
                }
                let mut acc = ZERO;
                for (s, &c) in self.rows[p].iter().enumerate() {
                    if c != ZERO {
                        if let Some(q) = g.offset(p, slot_offset(s)) {
                            acc += c * u[q];
                        }
                    }
                }
                acc
            })
            .collect()
    }

    /// Bilinear energy pairing `a(u, v) = sum_p v_p (A u)_p` (no conjugation).
    pub fn energy_pair(&self, u: &[C64], v: &[C64]) -> C64 {
        self.energy_apply(u).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Discrete `-div(K grad u) + q u` at free nodes (zero elsewhere).
    pub fn apply_operator(&self, u: &ComplexField) -> ComplexField {
        let scale = self.grid.h().powi(-3);
        let au = self.energy_apply(&u.values);
        let mut out = ComplexField::zeros(self.grid);
        for &p in &self.free {
            out.values[p] = au[p] * scale;
        }
        out
    }

    /// Solve `A_II x = b` for several complex right-hand sides at once, each of
    /// length equal to the number of free nodes.
    pub fn solve_free(&self, rhs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        let n = self.free.len();
        let ncol = rhs.len();
        if ncol == 0 {
            return Ok(Vec::new());
        }
        let b = Mat::from_fn(2 * n, ncol, |i, j| {
            let v = rhs[j][i / 2];
            if i % 2 == 0 { v.re } else { v.im }
        });
        let mut x = self.lu.solve(&b);
        let mut worst = 0.0f64;
        for pass in 0..2 {
            let r = &b - &self.matrix * &x;
            worst = 0.0;
            for j in 0..ncol {
                let bn = b.col(j).norm_l2();
                let rn = r.col(j).norm_l2();
                let rel = if bn > 0.0 { rn / bn } else { rn };
                worst = worst.max(rel);
            }
            if worst <= self.tolerance * 1e-2 || pass == 1 {
                break;
            }
            x += self.lu.solve(&r);
        }
        if !(worst <= self.tolerance) {
            return Err(Error::ResidualNotMet {
                achieved: worst,
                tolerance: self.tolerance,
            });
        }
        Ok((0..ncol)
            .map(|j| (0..n).map(|r| C64::new(x[(2 * r, j)], x[(2 * r + 1, j)])).collect())
            .collect())
    }

    /// Solve with Dirichlet data `g` (read at Dirichlet nodes) and source `f`
    /// (read at free nodes). Inactive nodes are returned as zero.
    pub fn solve_dirichlet(&self, g: &ComplexField, f: &ComplexField) -> Result<ComplexField> {
        Ok(self.solve_dirichlet_many(&[g], &[f])?.remove(0))
    }

    pub fn solve_dirichlet_many(&self, g: &[&ComplexField], f: &[&ComplexField]) -> Result<Vec<ComplexField>> {
        if g.len() != f.len() {
            return Err(Error::Shape("boundary data and source counts differ".into()));
        }
        let h3 = self.grid.h().powi(3);
        let mut rhs = Vec::with_capacity(g.len());
        let mut lifted = Vec::with_capacity(g.len());
        for (gi, fi) in g.iter().zip(f) {
            if gi.grid != self.grid || fi.grid != self.grid {
                return Err(Error::Shape("field grid differs from operator grid".into()));
            }
            if !gi.is_finite() || !fi.is_finite() {
                return Err(Error::domain("non-finite boundary data or source"));
            }
            let mut lift = vec![ZERO; self.grid.len()];
            for &p in &self.dirichlet {
                lift[p] = gi.values[p];
            }
            let al = self.energy_apply(&lift);
            rhs.push(self.free.iter().map(|&p| fi.values[p] * h3 - al[p]).collect());
            lifted.push(lift);
        }
        let xs = self.solve_free(&rhs)?;
        Ok(xs
            .into_iter()
            .zip(lifted)
            .map(|(x, mut lift)| {
                for (r, &p) in self.free.iter().enumerate() {
                    lift[p] = x[r];
                }
                ComplexField {
                    grid: self.grid,
                    values: lift,
                }
            })
            .collect())
    }

    /// Relative residual `|A_h u - f| / |f|` over free nodes, `|.|` the
    /// Euclidean norm (absolute when `f = 0`).
    pub fn relative_residual(&self, u: &ComplexField, f: &ComplexField) -> f64 {
        let au = self.apply_operator(u);
        let (mut r, mut s) = (0.0, 0.0);
        for &p in &self.free {
            r += (au.values[p] - f.values[p]).norm_sqr();
            s += f.values[p].norm_sqr();
        }
        if s > 0.0 { (r / s).sqrt() } else { r.sqrt() }
    }
}

/// Continuum `-div(K grad u) + (mu_a - ik) u` of a smooth field at a point,
/// using fourth-order central differences with step `delta` on the flux. Used
/// as an oracle to build manufactured sources.
pub fn continuum_operator(
    tensor: &dyn Fn([f64; 3]) -> Matrix3<C64>,
    reaction: &dyn Fn([f64; 3]) -> C64,
    u: &dyn Fn([f64; 3]) -> C64,
    x: [f64; 3],
    delta: f64,
) -> C64 {
    let shift = |x: [f64; 3], a: usize, s: f64| {
        let mut y = x;
        y[a] += s;
        y
    };
    let d1 = |f: &dyn Fn([f64; 3]) -> C64, x: [f64; 3], a: usize| {
        (f(shift(x, a, -2.0 * delta)) - f(shift(x, a, -delta)) * 8.0 + f(shift(x, a, delta)) * 8.0
            - f(shift(x, a, 2.0 * delta)))
            / (12.0 * delta)
    };
    let flux = |y: [f64; 3], a: usize| -> C64 {
        let k = tensor(y);
        (0..3).map(|b| k[(a, b)] * d1(u, y, b)).sum()
    };
    let mut div = ZERO;
    for a in 0..3 {
        let fa = |y: [f64; 3]| flux(y, a);
        div += d1(&fa, x, a);
    }
    -div + reaction(x) * u(x)
}

/// Schauder-type monitor: on dyadic shells `r < |x - c| < 2r` the ratio of the
/// discrete `W^{2,2}` seminorm to `|L u|_2 + r^{-2} |u|_2`.
pub fn schauder_monitor(op: &DiscreteOperator, u: &ComplexField, center: [f64; 3], radii: &[f64]) -> Vec<f64> {
    let g = op.grid;
    let lu = op.apply_operator(u);
    radii
        .iter()
        .map(|&r| {
            let (mut d2, mut l2, mut u2) = (0.0, 0.0, 0.0);
            for &p in op.free_nodes() {
                let x = g.coords(p);
                let dist = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2) + (x[2] - center[2]).powi(2)).sqrt();
                if dist <= r || dist >= 2.0 * r {
                    continue;
                }
                let w = g.volume_weight(p);
                for mi in crate::fd::multi_indices(2) {
                    d2 += w * crate::fd::partial(&g, p, mi, 2, |q| u.values[q]).norm_sqr();
                }
                l2 += w * lu.values[p].norm_sqr();
                u2 += w * u.values[p].norm_sqr();
            }
            let den = l2.sqrt() + u2.sqrt() / (r * r);
            if den > 0.0 { d2.sqrt() / den } else { 0.0 }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::AprioriData;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn apriori(k: f64) -> AprioriData {
        AprioriData {
            n: 3,
            p: 6.0,
            lambda: 2.0,
            sobolev_bound: 100.0,
            cal_e: 2.0,
            k,
            r0: 0.5,
            lipschitz: 1.0,
            diam: 3f64.sqrt(),
            alpha: 0.25,
        }
    }

    #[test]
    fn constant_isotropic_is_seven_point() {
        let grid = GridDomain::new(1.0, 9).unwrap();
        let med = OpticalMedium::homogeneous(grid, apriori(0.0), 1.0, 1.0).unwrap();
        let op = assemble(&med, false).unwrap();
        let p = grid.index(4, 4, 4);
        let s = op.stencil(p);
        let kappa = 1.0 / 6.0;
        let h = grid.h();
        for slot in 0..27 {
            let d = slot_offset(slot);
            let l1: isize = d.iter().map(|v| v.abs()).sum();
            let expect = match l1 {
                0 => 6.0 * kappa * h,
                1 => -kappa * h,
                _ => 0.0,
            };
            assert!((s[slot] - C64::new(expect, 0.0)).norm() < 1e-15, "slot {slot}");
        }
        let sum: C64 = s.iter().sum();
        assert!(sum.norm() < 1e-15);
    }

    #[test]
    fn anisotropic_rows_sum_to_zero_without_reaction() {
        let grid = GridDomain::new(1.0, 9).unwrap();
        let b = |_: [f64; 3]| Matrix3::new(0.2, 0.1, 0.0, 0.1, -0.1, 0.05, 0.0, 0.05, 0.3);
        let med = OpticalMedium::from_fns(grid, apriori(0.3), |_| 1.0, |_| 1.2, Some(&b)).unwrap();
        let op = assemble(&med, false).unwrap();
        for &p in op.free_nodes() {
            let sum: C64 = op.stencil(p).iter().sum();
            assert!(sum.norm() < 1e-14);
        }
    }

    #[test]
    fn constant_stencil_matches_assembled_row() {
        let grid = GridDomain::new(1.0, 9).unwrap();
        let b = |_: [f64; 3]| Matrix3::new(0.2, 0.1, 0.0, 0.1, -0.1, 0.05, 0.0, 0.05, 0.3);
        let med = OpticalMedium::from_fns(grid, apriori(0.3), |_| 1.0, |_| 1.2, Some(&b)).unwrap();
        let op = assemble(&med, false).unwrap();
        let p = grid.index(3, 5, 4);
        let row = constant_stencil(grid.h(), &med.tensor_at(p).unwrap());
        let scale = grid.h().powi(-3);
        for (a, b) in row.iter().zip(op.stencil(p)) {
            assert!((a - b * scale).norm() < 1e-12 * scale);
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let grid = GridDomain::new(1.0, 9).unwrap();
        let med = OpticalMedium::homogeneous(grid, apriori(0.3), 1.0, 1.0).unwrap();
        let op = assemble(&med, true).unwrap();
        let z = ComplexField::zeros(grid);
        let u = op.solve_dirichlet(&z, &z).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn solve_reaches_residual_and_operator_is_linear() {
        let grid = GridDomain::new(1.0, 11).unwrap();
        let med = OpticalMedium::from_fns(grid, apriori(0.3), |x| 1.0 + 0.3 * x[0], |x| 1.0 + 0.2 * x[1] * x[2], None).unwrap();
        let op = assemble(&med, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rand_field = || ComplexField {
            grid,
            values: (0..grid.len()).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
        };
        let g = rand_field();
        let f = rand_field();
        let u = op.solve_dirichlet(&g, &f).unwrap();
        assert!(op.relative_residual(&u, &f) <= 1e-10);
        for &p in op.dirichlet_nodes() {
            assert_eq!(u.values[p], g.values[p]);
        }
        let a = rand_field();
        let b = rand_field();
        let c = C64::new(0.3, -1.7);
        let combo = ComplexField {
            grid,
            values: a.values.iter().zip(&b.values).map(|(x, y)| x * c + y).collect(),
        };
        let la = op.apply_operator(&a);
        let lb = op.apply_operator(&b);
        let lc = op.apply_operator(&combo);
        let scale = lc.max_abs();
        for p in 0..grid.len() {
            assert!((lc.values[p] - (la.values[p] * c + lb.values[p])).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn continuum_operator_on_polynomial() {
        let k = |_: [f64; 3]| Matrix3::identity() * C64::new(0.5, 0.25);
        let q = |_: [f64; 3]| C64::new(1.0, -1.0);
        let u = |x: [f64; 3]| C64::new(x[0] * x[0] + x[1] * x[2], 0.0);
        let x = [0.3, 0.4, 0.5];
        let v = continuum_operator(&k, &q, &u, x, 1e-2);
        let expect = -C64::new(0.5, 0.25) * 2.0 + C64::new(1.0, -1.0) * u(x);
        assert!((v - expect).norm() < 1e-9);
    }
}
