//! Discrete Dirichlet-to-Neumann maps, boundary Sobolev scales of order
//! `+-1/2`, the operator norm between them and the Alessandrini identity.
//!
//! `Lambda` acts on nodal boundary values and returns the boundary functional
//! `g -> a(u_f, E g)` of the energy form, which is the Schur complement
//! `A_bb - A_bI A_II^{-1} A_Ib` of the assembled energy matrix.

use std::io::{Read, Write};

use faer::{Mat, Side};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::fd;
use crate::grid::{ComplexField, GridDomain};
use crate::medium::{split_real_imag, OpticalMedium};
use crate::solver::{assemble, stencil_slot, DiscreteOperator};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
/// Columns solved together against one factorization.
const BATCH: usize = 64;

/// Dense complex matrix on boundary nodes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DNOperator {
    pub grid: GridDomain,
    /// Boundary node indices, in the order of rows and columns.
    pub boundary: Vec<usize>,
    pub entries: Vec<C64>,
    pub medium_fingerprint: String,
    pub grid_fingerprint: String,
}

impl DNOperator {
    pub fn size(&self) -> usize {
        self.boundary.len()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.boundary.len() + j]
    }

    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        let n = self.size();
        (0..n)
            .map(|i| self.entries[i * n..(i + 1) * n].iter().zip(f).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `max |Lambda - Lambda^T| / max |Lambda|`.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.size();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).norm());
            }
        }
        let s = self.max_abs();
        if s > 0.0 { worst / s } else { worst }
    }

    pub fn difference(&self, other: &DNOperator) -> Result<DNOperator> {
        if self.boundary != other.boundary || self.grid != other.grid {
            return Err(Error::Shape("D-N operators live on different boundary grids".into()));
        }
        Ok(DNOperator {
            grid: self.grid,
            boundary: self.boundary.clone(),
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect(),
            medium_fingerprint: format!("{}-{}", self.medium_fingerprint, other.medium_fingerprint),
            grid_fingerprint: self.grid_fingerprint.clone(),
        })
    }

    pub fn scaled(&self, c: C64) -> DNOperator {
        DNOperator {
            entries: self.entries.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    const MAGIC: &'static [u8; 4] = b"OTDN";
    const FORMAT_VERSION: u32 = 1;

    /// Binary container: magic, version, grid, fingerprints, boundary indices
    /// and little-endian `(re, im)` pairs.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.grid.extent.to_le_bytes())?;
        w.write_all(&(self.grid.points_per_axis as u64).to_le_bytes())?;
        for s in [&self.medium_fingerprint, &self.grid_fingerprint] {
            w.write_all(&(s.len() as u64).to_le_bytes())?;
            w.write_all(s.as_bytes())?;
        }
        w.write_all(&(self.boundary.len() as u64).to_le_bytes())?;
        for &b in &self.boundary {
            w.write_all(&(b as u64).to_le_bytes())?;
        }
        for v in &self.entries {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Format("not a D-N container".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != Self::FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let mut b8 = [0u8; 8];
        let mut read_u64 = |r: &mut dyn Read| -> Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let extent = f64::from_bits(read_u64(r)?);
        let m = read_u64(r)? as usize;
        let grid = GridDomain::with_cap(extent, m, usize::MAX)?;
        let mut strings = Vec::new();
        for _ in 0..2 {
            let len = read_u64(r)? as usize;
            if len > 1 << 16 {
                return Err(Error::Format("fingerprint too long".into()));
            }
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            strings.push(String::from_utf8(buf).map_err(|_| Error::Format("fingerprint is not UTF-8".into()))?);
        }
        let n = read_u64(r)? as usize;
        if n != grid.boundary_nodes().len() {
            return Err(Error::Format("boundary size does not match the grid".into()));
        }
        let boundary = (0..n).map(|_| read_u64(r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let mut entries = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            let re = f64::from_bits(read_u64(r)?);
            let im = f64::from_bits(read_u64(r)?);
            entries.push(C64::new(re, im));
        }
        let grid_fingerprint = strings.pop().unwrap_or_default();
        let medium_fingerprint = strings.pop().unwrap_or_default();
        if grid_fingerprint != grid.fingerprint() {
            return Err(Error::Format("grid fingerprint mismatch".into()));
        }
        Ok(Self {
            grid,
            boundary,
            entries,
            medium_fingerprint,
            grid_fingerprint,
        })
    }
}

/// Energy-form boundary functional `(A u)_b` at the given boundary nodes.
fn boundary_functional(op: &DiscreteOperator, u: &[C64], nodes: &[usize]) -> Vec<C64> {
    let g = op.grid;
    nodes
        .iter()
        .map(|&b| {
            let row = op.stencil(b);
            let mut acc = ZERO;
            for (s, &c) in row.iter().enumerate() {
                if c == ZERO {
                    continue;
                }
                let d = [(s / 9) as isize - 1, ((s / 3) % 3) as isize - 1, (s % 3) as isize - 1];
                if let Some(q) = g.offset(b, d) {
                    acc += c * u[q];
                }
            }
            acc
        })
        .collect()
}

/// Assemble the D-N map with the canonical boundary ordering.
pub fn assemble_dn(medium: &OpticalMedium) -> Result<DNOperator> {
    let order = medium.grid.boundary_nodes();
    assemble_dn_ordered(medium, &order)
}

/// Assemble with rows and columns in the given order of boundary nodes.
pub fn assemble_dn_ordered(medium: &OpticalMedium, order: &[usize]) -> Result<DNOperator> {
    let op = assemble(medium, true)?;
    dn_from_operator(&op, medium, order)
}

pub fn dn_from_operator(op: &DiscreteOperator, medium: &OpticalMedium, order: &[usize]) -> Result<DNOperator> {
    let grid = op.grid;
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != op.dirichlet_nodes() {
        return Err(Error::Shape("ordering is not a permutation of the boundary nodes".into()));
    }
    let n = order.len();
    let free = op.free_nodes();
    let batches: Vec<std::ops::Range<usize>> = (0..n).step_by(BATCH).map(|s| s..(s + BATCH).min(n)).collect();
    let columns: Vec<Vec<Vec<C64>>> = batches
        .par_iter()
        .map(|range| -> Result<Vec<Vec<C64>>> {
            // rhs = -A_Ib e_j
            let rhs: Vec<Vec<C64>> = range
                .clone()
                .map(|j| {
                    let b = order[j];
                    free.iter()
                        .map(|&p| {
                            let d = grid.ijk(b).map(|v| v as isize);
                            let e = grid.ijk(p).map(|v| v as isize);
                            let off = [d[0] - e[0], d[1] - e[1], d[2] - e[2]];
                            if off.iter().all(|v| v.abs() <= 1) {
                                -op.stencil(p)[stencil_slot(off)]
                            } else {
                                ZERO
                            }
                        })
                        .collect()
                })
                .collect();
            let xs = op.solve_free(&rhs).map_err(|e| Error::Column {
                column: range.start,
                source: Box::new(e),
            })?;
            Ok(range
                .clone()
                .zip(xs)
                .map(|(j, x)| {
                    let mut u = vec![ZERO; grid.len()];
                    u[order[j]] = C64::new(1.0, 0.0);
                    for (r, &p) in free.iter().enumerate() {
                        u[p] = x[r];
                    }
                    boundary_functional(op, &u, order)
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut entries = vec![ZERO; n * n];
    for (j, col) in columns.into_iter().flatten().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            entries[i * n + j] = v;
        }
    }
    Ok(DNOperator {
        grid,
        boundary: order.to_vec(),
        entries,
        medium_fingerprint: medium.fingerprint(),
        grid_fingerprint: grid.fingerprint(),
    })
}

/// Surface Laplacian and mass of the cube boundary with its spectral
/// decomposition, realizing the discrete `H^{1/2}(boundary)` scale through
/// powers of `I + Delta_b`.
#[derive(Debug, Clone)]
pub struct SobolevScale {
    pub grid: GridDomain,
    pub boundary: Vec<usize>,
    /// Lumped boundary mass per node.
    pub mass: Vec<f64>,
    /// Surface edges `(i, j)` in boundary numbering, unit weight.
    pub edges: Vec<(usize, usize)>,
    /// Eigenvalues of `M^{-1/2} S M^{-1/2}`, ascending and clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Smallest eigenvalue before clamping.
    pub raw_min_eigenvalue: f64,
    /// Orthonormal eigenvectors, column `i` for eigenvalue `i`.
    pub eigenvectors: Mat<f64>,
}

/// Which weighting [`sobolev_pairing`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairingOrder {
    /// Inner product of `H^{1/2}` on nodal values.
    Plus,
    /// Inner product of `H^{-1/2}` on boundary functionals.
    Minus,
    /// Duality pairing `sum_b phi_b f_b` between a functional and a function.
    Duality,
}

impl SobolevScale {
    pub fn new(grid: GridDomain) -> Result<Self> {
        let boundary = grid.boundary_nodes();
        let n = boundary.len();
        let mut pos = vec![usize::MAX; grid.len()];
        for (i, &b) in boundary.iter().enumerate() {
            pos[b] = i;
        }
        let h = grid.h();
        let last = grid.m() - 1;
        let on_face = |c: usize| c == 0 || c == last;
        let mass: Vec<f64> = boundary
            .iter()
            .map(|&b| match grid.boundary_multiplicity(b) {
                1 | 2 => h * h,
                _ => 0.75 * h * h,
            })
            .collect();
        let mut edges = Vec::new();
        for (i, &b) in boundary.iter().enumerate() {
            let pb = grid.ijk(b);
            for a in 0..3 {
                let mut d = [0isize; 3];
                d[a] = 1;
                let Some(q) = grid.offset(b, d) else { continue };
                let j = pos[q];
                if j == usize::MAX {
                    continue;
                }
                let pq = grid.ijk(q);
                let shares_face = (0..3).any(|c| c != a && pb[c] == pq[c] && on_face(pb[c]));
                if shares_face {
                    edges.push((i, j));
                }
            }
        }
        let inv_sqrt_m: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        let mut s = Mat::<f64>::zeros(n, n);
        for &(i, j) in &edges {
            s[(i, i)] += 1.0;
            s[(j, j)] += 1.0;
            s[(i, j)] -= 1.0;
            s[(j, i)] -= 1.0;
        }
        let scaled = Mat::from_fn(n, n, |i, j| s[(i, j)] * inv_sqrt_m[i] * inv_sqrt_m[j]);
        let eig = scaled
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Factorization(format!("boundary eigendecomposition: {e:?}")))?;
        let raw: Vec<f64> = (0..n).map(|i| eig.S()[i]).collect();
        let raw_min_eigenvalue = raw.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            grid,
            boundary,
            mass,
            edges,
            eigenvalues: raw.iter().map(|&v| v.max(0.0)).collect(),
            raw_min_eigenvalue,
            eigenvectors: eig.U().to_owned(),
        })
    }

    pub fn size(&self) -> usize {
        self.boundary.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Spectral coefficients `Psi^T M^{s} v` for `s = +-1/2`.
    fn coefficients(&self, v: &[C64], mass_power: f64) -> Vec<C64> {
        let n = self.size();
        let w: Vec<C64> = v.iter().zip(&self.mass).map(|(x, m)| x * m.powf(mass_power)).collect();
        (0..n)
            .map(|k| (0..n).map(|i| w[i] * self.eigenvectors[(i, k)]).sum())
            .collect()
    }

    fn weighted(&self, a: &[C64], b: &[C64], power: f64) -> C64 {
        a.iter()
            .zip(b)
            .zip(&self.eigenvalues)
            .map(|((x, y), l)| x * y.conj() * (1.0 + l).powf(power))
            .sum()
    }

    /// `|f|_{1/2}` of nodal boundary values.
    pub fn norm_half(&self, f: &[C64]) -> f64 {
        let c = self.coefficients(f, 0.5);
        self.weighted(&c, &c, 0.5).re.max(0.0).sqrt()
    }

    /// `|phi|_{-1/2}` of a boundary functional given by its nodal action.
    pub fn norm_minus_half(&self, phi: &[C64]) -> f64 {
        let d = self.coefficients(phi, -0.5);
        self.weighted(&d, &d, -0.5).re.max(0.0).sqrt()
    }

    /// `M^{-1/2} Psi (I + D)^{power} Psi^T M^{1/2} f`.
    pub fn apply_power(&self, f: &[C64], power: f64) -> Vec<C64> {
        let n = self.size();
        let c: Vec<C64> = self
            .coefficients(f, 0.5)
            .into_iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| c * (1.0 + l).powf(power))
            .collect();
        (0..n)
            .map(|i| {
                let s: C64 = (0..n).map(|k| c[k] * self.eigenvectors[(i, k)]).sum();
                s / self.mass[i].sqrt()
            })
            .collect()
    }

    /// Real matrix `M^{-1/2} Psi (I + D)^{-1/4}`.
    fn weight_matrix(&self) -> Mat<f64> {
        Mat::from_fn(self.size(), self.size(), |i, k| {
            self.eigenvectors[(i, k)] / self.mass[i].sqrt() * (1.0 + self.eigenvalues[k]).powf(-0.25)
        })
    }

    /// The operator whose spectral norm is `|Delta|_*`:
    /// `(I + D)^{-1/4} Psi^T M^{-1/2} Delta M^{-1/2} Psi (I + D)^{-1/4}`.
    pub fn normalized_operator(&self, delta: &DNOperator) -> Result<Mat<C64>> {
        if delta.boundary != self.boundary {
            return Err(Error::Shape("operator and scale use different boundary orderings".into()));
        }
        let n = self.size();
        let w = self.weight_matrix();
        let re = Mat::from_fn(n, n, |i, j| delta.get(i, j).re);
        let im = Mat::from_fn(n, n, |i, j| delta.get(i, j).im);
        let a_re = w.transpose() * (&re * &w);
        let a_im = w.transpose() * (&im * &w);
        Ok(Mat::from_fn(n, n, |i, j| C64::new(a_re[(i, j)], a_im[(i, j)])))
    }
}

/// Pairings realizing the discrete `H^{+-1/2}` inner products and the duality.
pub fn sobolev_pairing(f: &[C64], g: &[C64], scale: &SobolevScale, order: PairingOrder) -> C64 {
    match order {
        PairingOrder::Plus => scale.weighted(&scale.coefficients(f, 0.5), &scale.coefficients(g, 0.5), 0.5),
        PairingOrder::Minus => scale.weighted(&scale.coefficients(f, -0.5), &scale.coefficients(g, -0.5), -0.5),
        PairingOrder::Duality => f.iter().zip(g).map(|(a, b)| a * b).sum(),
    }
}

/// Outcome of a power iteration.
#[derive(Debug, Clone, Serialize)]
pub struct StarNorm {
    pub value: f64,
    pub iterations: usize,
    /// `|A^*A v - rho v| / rho` at exit.
    pub residual: f64,
}

pub const STAR_NORM_TOLERANCE: f64 = 1e-8;
pub const STAR_NORM_MAX_ITERATIONS: usize = 20_000;

/// `|Delta|_{L(H^{1/2}, H^{-1/2})}` by power iteration on `A^*A`, started from
/// a seeded random vector.
pub fn star_norm(delta: &DNOperator, scale: &SobolevScale, seed: u64) -> Result<StarNorm> {
    let a = scale.normalized_operator(delta)?;
    power_iteration(&a, seed, STAR_NORM_TOLERANCE, STAR_NORM_MAX_ITERATIONS)
}

/// Same quantity from a dense singular value decomposition.
pub fn star_norm_svd(delta: &DNOperator, scale: &SobolevScale) -> Result<f64> {
    let a = scale.normalized_operator(delta)?;
    let s = a
        .singular_values()
        .map_err(|e| Error::Factorization(format!("singular values: {e:?}")))?;
    Ok(s.into_iter().fold(0.0, f64::max))
}

fn power_iteration(a: &Mat<C64>, seed: u64, tol: f64, cap: usize) -> Result<StarNorm> {
    let n = a.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Mat::from_fn(n, 1, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let normalize = |v: &mut Mat<C64>| -> f64 {
        let s = v.norm_l2();
        if s > 0.0 {
            *v = &*v * faer::Scale(C64::new(1.0 / s, 0.0));
        }
        s
    };
    normalize(&mut v);
    let mut history = Vec::new();
    let mut rho_prev = f64::NAN;
    let residual_tol = tol.sqrt();
    for it in 1..=cap {
        let w = a * &v;
        let rho = w.squared_norm_l2();
        if rho == 0.0 {
            return Ok(StarNorm {
                value: 0.0,
                iterations: it,
                residual: 0.0,
            });
        }
        let mut z = a.adjoint() * &w;
        let r = (&z - &v * faer::Scale(C64::new(rho, 0.0))).norm_l2() / rho;
        history.push(rho);
        if history.len() > 10 {
            history.remove(0);
        }
        let stalled = ((rho - rho_prev) / rho).abs() <= tol * 1e-4;
        if r <= residual_tol || stalled {
            return Ok(StarNorm {
                value: rho.sqrt(),
                iterations: it,
                residual: r,
            });
        }
        rho_prev = rho;
        normalize(&mut z);
        v = z;
    }
    Err(Error::NoConvergence {
        iterations: cap,
        history,
    })
}

/// Volume form `sum_p w_p (k_p grad u . grad v + q_p u v)` with second-order
/// nodal gradients and trapezoidal weights.
pub fn quadrature_form(grid: &GridDomain, k: &[Matrix3<C64>], q: &[C64], u: &[C64], v: &[C64]) -> C64 {
    (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let gu = fd::gradient(grid, p, |i| u[i]);
            let gv = fd::gradient(grid, p, |i| v[i]);
            let mut s = q[p] * u[p] * v[p];
            for a in 0..3 {
                for b in 0..3 {
                    s += k[p][(a, b)] * gu[b] * gv[a];
                }
            }
            s * grid.volume_weight(p)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlessandriniReport {
    /// `<(Lambda_1 - Lambda_2) f, g>`.
    #[serde(serialize_with = "crate::serialize_c64")]
    pub lhs: C64,
    /// `int (K_1 - K_2) grad u . grad v + (mu_a1 - mu_a2) u v`.
    #[serde(serialize_with = "crate::serialize_c64")]
    pub rhs: C64,
    /// `|<Lambda_1 f, g>|`, the size of the pairing being differenced.
    pub scale: f64,
    /// `|lhs - rhs| / max(scale, |lhs|, |rhs|)`, zero when all vanish.
    pub residual: f64,
}

/// Both sides of the Alessandrini identity for boundary data `f`, `g` given in
/// the canonical boundary ordering.
pub fn alessandrini_residual(m1: &OpticalMedium, m2: &OpticalMedium, f: &[C64], g: &[C64]) -> Result<AlessandriniReport> {
    if m1.grid != m2.grid {
        return Err(Error::Shape("media on different grids".into()));
    }
    let op1 = assemble(m1, true)?;
    let op2 = assemble(m2, true)?;
    alessandrini_with(&op1, &op2, m1, m2, f, g)
}

pub fn alessandrini_with(
    op1: &DiscreteOperator,
    op2: &DiscreteOperator,
    m1: &OpticalMedium,
    m2: &OpticalMedium,
    f: &[C64],
    g: &[C64],
) -> Result<AlessandriniReport> {
    let grid = m1.grid;
    let boundary = op1.dirichlet_nodes();
    if f.len() != boundary.len() || g.len() != boundary.len() {
        return Err(Error::Shape("boundary data length".into()));
    }
    let lift = |data: &[C64]| {
        let mut field = ComplexField::zeros(grid);
        for (&b, &v) in boundary.iter().zip(data) {
            field.values[b] = v;
        }
        field
    };
    let zero = ComplexField::zeros(grid);
    let (ff, gg) = (lift(f), lift(g));
    let u1 = op1.solve_dirichlet(&ff, &zero)?;
    let u2f = op2.solve_dirichlet(&ff, &zero)?;
    let v = op2.solve_dirichlet(&gg, &zero)?;
    let pair = |op: &DiscreteOperator, u: &ComplexField| -> C64 {
        boundary_functional(op, &u.values, boundary).iter().zip(g).map(|(a, b)| a * b).sum()
    };
    let p1 = pair(op1, &u1);
    let p2 = pair(op2, &u2f);
    let lhs = p1 - p2;
    let t1 = split_real_imag(m1)?;
    let t2 = split_real_imag(m2)?;
    let dk: Vec<Matrix3<C64>> = t1.k.iter().zip(&t2.k).map(|(a, b)| a - b).collect();
    let dq: Vec<C64> = m1.mu_a.iter().zip(&m2.mu_a).map(|(a, b)| C64::new(a - b, 0.0)).collect();
    let rhs = quadrature_form(&grid, &dk, &dq, &u1.values, &v.values);
    let scale = p1.norm();
    let den = scale.max(lhs.norm()).max(rhs.norm());
    Ok(AlessandriniReport {
        lhs,
        rhs,
        scale,
        residual: if den > 0.0 { (lhs - rhs).norm() / den } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::AprioriData;

    pub(crate) fn apriori(k: f64) -> AprioriData {
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

    fn medium(mu: f64) -> OpticalMedium {
        let grid = GridDomain::new(1.0, 9).unwrap();
        OpticalMedium::from_fns(grid, apriori(0.1), |x| mu + 0.2 * x[0] * x[1], |_| 1.0, None).unwrap()
    }

    #[test]
    fn scale_structure() {
        let grid = GridDomain::new(2.0, 9).unwrap();
        let s = SobolevScale::new(grid).unwrap();
        assert_eq!(s.size(), 6 * 49 + 12 * 7 + 8);
        assert!((s.total_weight() - 6.0 * 4.0).abs() < 1e-12);
        assert!(s.raw_min_eigenvalue > -1e-12);
        assert!(s.eigenvalues[0].abs() < 1e-12);
        let c = vec![C64::new(0.7, -0.2); s.size()];
        let n2 = s.norm_half(&c).powi(2);
        assert!((n2 - s.total_weight() * c[0].norm_sqr()).abs() < 1e-10);
        // every interior face node has four neighbours on the surface graph
        let mut deg = vec![0; s.size()];
        for &(i, j) in &s.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        assert!(deg.iter().all(|&d| d == 3 || d == 4));
    }

    #[test]
    fn zero_difference_and_symmetry() {
        let m = medium(1.0);
        let dn = assemble_dn(&m).unwrap();
        assert!(dn.symmetry_residual() <= 1e-9, "{}", dn.symmetry_residual());
        let again = assemble_dn(&m).unwrap();
        assert_eq!(dn.entries, again.entries);
        let scale = SobolevScale::new(m.grid).unwrap();
        let z = dn.difference(&again).unwrap();
        assert_eq!(star_norm(&z, &scale, 1).unwrap().value, 0.0);
    }

    #[test]
    fn container_roundtrip() {
        let dn = assemble_dn(&medium(1.0)).unwrap();
        let mut buf = Vec::new();
        dn.write_to(&mut buf).unwrap();
        let back = DNOperator::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, dn);
        buf[0] = b'X';
        assert!(DNOperator::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn identical_media_alessandrini() {
        let m = medium(1.0);
        let n = m.grid.boundary_nodes().len();
        let f: Vec<C64> = (0..n).map(|i| C64::new((i as f64 * 0.1).sin(), 0.3)).collect();
        let g: Vec<C64> = (0..n).map(|i| C64::new(1.0, (i as f64 * 0.07).cos())).collect();
        let r = alessandrini_residual(&m, &m, &f, &g).unwrap();
        assert_eq!(r.rhs, C64::new(0.0, 0.0));
        assert!(r.residual <= 1e-9, "{r:?}");
    }
}
