//! Boundary stability experiments: perturb `mu_a` near a face, measure the
//! change of the Dirichlet-to-Neumann map in the `H^{1/2} -> H^{-1/2}` norm and
//! compare it with boundary values and normal derivatives of the perturbation.

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dnmap::{assemble_dn, star_norm, DNOperator, SobolevScale};
use crate::fd::{fornberg_weights, multi_indices, partial};
use crate::fit::{loglog_fit, LogLogFit};
use crate::grid::GridDomain;
use crate::medium::OpticalMedium;
use crate::solver::DEFAULT_TOLERANCE;
use crate::{Error, Result, C64};

/// `prod_{i=0}^{h} alpha / (alpha + i)`.
pub fn delta_h(alpha: f64, h: u32) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("Hoelder exponent {alpha} outside (0, 1]")));
    }
    Ok((0..=h).map(|i| alpha / (alpha + i as f64)).product())
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Outward unit field on the cube boundary: the face normal away from edges,
/// blended with the neighbouring face normals inside a band of width `2h`.
#[derive(Debug, Clone, Serialize)]
pub struct NonTangentialField {
    #[serde(skip)]
    pub grid: GridDomain,
    /// Boundary nodes in increasing index order.
    pub nodes: Vec<usize>,
    pub directions: Vec<[f64; 3]>,
    pub band: f64,
    /// Largest sampled `tau`.
    pub tau0: f64,
    /// Smallest sampled `dist(x + tau nu, cube) / tau`.
    pub comparability: f64,
}

impl NonTangentialField {
    /// Blended direction at a point of the cube surface.
    pub fn direction_at(grid: &GridDomain, x: [f64; 3], band: f64) -> [f64; 3] {
        let l = grid.extent;
        let mut v = [0.0; 3];
        for a in 0..3 {
            let (d_lo, d_hi) = (x[a], l - x[a]);
            let (d, sign) = if d_lo <= d_hi { (d_lo, -1.0) } else { (d_hi, 1.0) };
            v[a] = sign * smoothstep(1.0 - d / band);
        }
        let n = norm3(v);
        [v[0] / n, v[1] / n, v[2] / n]
    }

    pub fn direction(&self, node: usize) -> Option<[f64; 3]> {
        self.nodes.binary_search(&node).ok().map(|i| self.directions[i])
    }
}

pub fn build_nu_tilde(grid: GridDomain) -> NonTangentialField {
    let h = grid.h();
    let band = 2.0 * h;
    let nodes = grid.boundary_nodes();
    let directions: Vec<[f64; 3]> = nodes
        .iter()
        .map(|&p| NonTangentialField::direction_at(&grid, grid.coords(p), band))
        .collect();
    let taus = [h, 2.0 * h, 4.0 * h];
    let mut comparability = f64::INFINITY;
    for (&p, d) in nodes.iter().zip(&directions) {
        let x = grid.coords(p);
        for &t in &taus {
            let z = [x[0] + t * d[0], x[1] + t * d[1], x[2] + t * d[2]];
            comparability = comparability.min(grid.distance_to_cube(z) / t);
        }
    }
    NonTangentialField {
        grid,
        nodes,
        directions,
        band,
        tau0: taus[2],
        comparability,
    }
}

/// Trilinear interpolation of nodal values; `None` outside the closed cube.
pub fn interpolate(grid: &GridDomain, field: &[f64], x: [f64; 3]) -> Option<f64> {
    let h = grid.h();
    let last = grid.m() - 1;
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let s = x[a] / h;
        if !(s >= -1e-9 && s <= last as f64 + 1e-9) {
            return None;
        }
        let s = s.clamp(0.0, last as f64);
        let i = (s.floor() as usize).min(last - 1);
        base[a] = i;
        frac[a] = s - i as f64;
    }
    let mut acc = 0.0;
    for c in 0..8usize {
        let o = [(c >> 2) & 1, (c >> 1) & 1, c & 1];
        let w: f64 = (0..3).map(|a| if o[a] == 1 { frac[a] } else { 1.0 - frac[a] }).product();
        if w != 0.0 {
            acc += w * field[grid.index(base[0] + o[0], base[1] + o[1], base[2] + o[2])];
        }
    }
    Some(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeSup {
    pub value: f64,
    pub node: usize,
    /// Boundary samples whose stencil left the cube.
    pub skipped: usize,
}

/// `sup_{x in boundary} |d^j/dt^j f(x + t nu(x))|_{t=0}` by a one-sided
/// difference with `j + 3` points at spacing `delta` along `-nu`.
pub fn normal_derivative_sup(field: &[f64], nu: &NonTangentialField, order: u32, delta: f64) -> Result<DerivativeSup> {
    let grid = &nu.grid;
    if field.len() != grid.len() {
        return Err(Error::Shape("field sample count".into()));
    }
    let j = order as usize;
    let offsets: Vec<f64> = (0..j + 3).map(|s| -(s as f64) * delta).collect();
    let w = fornberg_weights(0.0, &offsets, j);
    let mut best = DerivativeSup {
        value: 0.0,
        node: nu.nodes.first().copied().unwrap_or(0),
        skipped: 0,
    };
    'nodes: for (&p, d) in nu.nodes.iter().zip(&nu.directions) {
        let x = grid.coords(p);
        let mut acc = 0.0;
        for (i, &t) in offsets.iter().enumerate() {
            let y = [x[0] + t * d[0], x[1] + t * d[1], x[2] + t * d[2]];
            match interpolate(grid, field, y) {
                Some(v) => acc += w[j][i] * v,
                None => {
                    best.skipped += 1;
                    continue 'nodes;
                }
            }
        }
        if acc.abs() > best.value {
            best.value = acc.abs();
            best.node = p;
        }
    }
    Ok(best)
}

/// Face of the unit cube: `x_axis = 0` or `x_axis = extent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
}

/// `mu_a` perturbation `eps d^j psi(r_t / rho) psi(d / depth)` near the centre
/// of a face, where `d` is the distance to that face, `r_t` the tangential
/// distance to the face centre and `psi` a smooth compactly supported bump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub profile_order: u32,
    pub face: Face,
    pub patch_radius: f64,
    pub depth: f64,
    pub alpha: f64,
    /// Admissible bound on the discrete `C^h` norm of the perturbation.
    pub holder_bound: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            profile_order: 0,
            face: Face { axis: 2, upper: false },
            patch_radius: 0.3,
            depth: 0.3,
            alpha: 0.5,
            holder_bound: 100.0,
        }
    }
}

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.face.axis > 2 {
            return Err(Error::config("/stability/face/axis", "axis must be 0, 1 or 2"));
        }
        if !(self.patch_radius > 0.0 && self.depth > 0.0) {
            return Err(Error::config("/stability/patch_radius", "patch sizes must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("/stability/alpha", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Unit-amplitude profile at `x`.
    pub fn profile(&self, grid: &GridDomain, x: [f64; 3]) -> f64 {
        let a = self.face.axis;
        let l = grid.extent;
        let d = if self.face.upper { l - x[a] } else { x[a] };
        let rt = (0..3)
            .filter(|&b| b != a)
            .map(|b| (x[b] - 0.5 * l).powi(2))
            .sum::<f64>()
            .sqrt();
        d.max(0.0).powi(self.profile_order as i32) * bump(rt / self.patch_radius) * bump(d / self.depth)
    }

    pub fn sample(&self, grid: &GridDomain, eps: f64) -> Vec<f64> {
        grid.sample_real(|x| eps * self.profile(grid, x))
    }
}

/// `max_{|gamma| <= h} sup |d^gamma f|` over all nodes.
pub fn discrete_ch_norm(grid: &GridDomain, f: &[f64], h: u32) -> f64 {
    let mut best = 0.0f64;
    for order in 0..=h as usize {
        for mi in multi_indices(order) {
            for p in 0..grid.len() {
                best = best.max(partial(grid, p, mi, 2, |q| f[q]).abs());
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TensorGap {
    pub order: u32,
    /// Through `dK = -n K dG K` from derivatives of the coefficients.
    pub chain_rule: f64,
    /// Direct differencing of the sampled tensor fields.
    pub direct: f64,
}

impl TensorGap {
    pub fn relative_gap(&self) -> f64 {
        let s = self.chain_rule.abs().max(self.direct.abs());
        if s == 0.0 {
            0.0
        } else {
            (self.chain_rule - self.direct).abs() / s
        }
    }
}

type M3 = Matrix3<C64>;

fn frob(m: &M3) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn multinomial(mi: [usize; 3]) -> f64 {
    let f = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
    f(mi[0] + mi[1] + mi[2]) / (f(mi[0]) * f(mi[1]) * f(mi[2]))
}

/// Per-node `G = (mu_a - ik) I + (I - B) mu_s` and its first and second
/// partial derivatives from the sampled coefficients.
struct GDerivatives<'a> {
    medium: &'a OpticalMedium,
}

impl GDerivatives<'_> {
    fn scalar(&self, f: &[f64], p: usize, mi: [usize; 3]) -> f64 {
        partial(&self.medium.grid, p, mi, 2, |q| f[q])
    }

    fn b(&self, p: usize, mi: [usize; 3]) -> Matrix3<f64> {
        match &self.medium.b {
            Some(b) => Matrix3::from_fn(|i, j| partial(&self.medium.grid, p, mi, 2, |q| b[q][(i, j)])),
            None => Matrix3::zeros(),
        }
    }

    fn k(&self, p: usize) -> Result<M3> {
        self.medium.tensor_at(p)
    }

    /// `d^mi G` for `|mi| <= 2`.
    fn g(&self, p: usize, mi: [usize; 3]) -> M3 {
        let m = self.medium;
        let ord = mi.iter().sum::<usize>();
        let id = Matrix3::<f64>::identity();
        let real: Matrix3<f64> = match ord {
            0 => id * m.mu_a[p] + (id - m.b_at(p)) * m.mu_s[p],
            1 => {
                id * self.scalar(&m.mu_a, p, mi) + (id - m.b_at(p)) * self.scalar(&m.mu_s, p, mi)
                    - self.b(p, mi) * m.mu_s[p]
            }
            _ => {
                // split mi into two unit indices e_i + e_j
                let mut units = Vec::new();
                for (a, &c) in mi.iter().enumerate() {
                    for _ in 0..c {
                        let mut e = [0; 3];
                        e[a] = 1;
                        units.push(e);
                    }
                }
                let (ei, ej) = (units[0], units[1]);
                id * self.scalar(&m.mu_a, p, mi) + (id - m.b_at(p)) * self.scalar(&m.mu_s, p, mi)
                    - self.b(p, ej) * self.scalar(&m.mu_s, p, ei)
                    - self.b(p, ei) * self.scalar(&m.mu_s, p, ej)
                    - self.b(p, mi) * m.mu_s[p]
            }
        };
        let mut out = real.map(|v| C64::new(v, 0.0));
        if ord == 0 {
            for i in 0..3 {
                out[(i, i)] -= C64::new(0.0, m.k());
            }
        }
        out
    }

    /// `d^mi K` by the product rule on `K = G^{-1} / n`.
    fn dk(&self, p: usize, mi: [usize; 3]) -> Result<M3> {
        let n = C64::new(3.0, 0.0);
        let k = self.k(p)?;
        let ord = mi.iter().sum::<usize>();
        Ok(match ord {
            0 => k,
            1 => -(k * self.g(p, mi) * k) * n,
            _ => {
                let mut units = Vec::new();
                for (a, &c) in mi.iter().enumerate() {
                    for _ in 0..c {
                        let mut e = [0; 3];
                        e[a] = 1;
                        units.push(e);
                    }
                }
                let (ei, ej) = (units[0], units[1]);
                let gi = self.g(p, ei);
                let gj = self.g(p, ej);
                let kj = -(k * gj * k) * n;
                -(kj * gi * k + k * self.g(p, mi) * k + k * gi * kj) * n
            }
        })
    }
}

/// `sup_{boundary} |D^h (K_1 - K_2)|`, with `|D^h T|^2 = sum_gamma (h! / gamma!) |d^gamma T|_F^2`.
pub fn tensor_derivative_gap(m1: &OpticalMedium, m2: &OpticalMedium, h: u32) -> Result<TensorGap> {
    if m1.grid != m2.grid {
        return Err(Error::Shape("media on different grids".into()));
    }
    if h > 2 {
        return Err(Error::domain("tensor derivative gap is implemented for h <= 2"));
    }
    for m in [m1, m2] {
        if let Some(avail) = m.holder_order {
            if avail < h {
                return Err(Error::Smoothness {
                    available: avail,
                    requested: h,
                });
            }
        }
    }
    let grid = m1.grid;
    let k1: Vec<M3> = (0..grid.len()).map(|p| m1.tensor_at(p)).collect::<Result<_>>()?;
    let k2: Vec<M3> = (0..grid.len()).map(|p| m2.tensor_at(p)).collect::<Result<_>>()?;
    let (g1, g2) = (GDerivatives { medium: m1 }, GDerivatives { medium: m2 });
    let mis = multi_indices(h as usize);
    let mut chain = 0.0f64;
    let mut direct = 0.0f64;
    for p in grid.boundary_nodes() {
        let (mut c2, mut d2) = (0.0, 0.0);
        for &mi in &mis {
            let w = multinomial(mi);
            let c = g1.dk(p, mi)? - g2.dk(p, mi)?;
            let d = M3::from_fn(|i, j| partial(&grid, p, mi, 2, |q| k1[q][(i, j)] - k2[q][(i, j)]));
            c2 += w * frob(&c).powi(2);
            d2 += w * frob(&d).powi(2);
        }
        chain = chain.max(c2.sqrt());
        direct = direct.max(d2.sqrt());
    }
    Ok(TensorGap {
        order: h,
        chain_rule: chain,
        direct,
    })
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub eps: f64,
    pub star_norm: f64,
    pub star_iterations: usize,
    /// `sup_boundary |mu_1 - mu_2|`.
    pub boundary_sup: f64,
    /// `sup_boundary |d^j_nu (mu_1 - mu_2)|` for `j = 0..=h`.
    pub normal_derivatives: Vec<f64>,
    pub tensor_gap: f64,
    pub ch_norm: f64,
    /// `star_norm / eps` deviates by more than 10% from its value at the
    /// smallest `eps`.
    pub nonlinear: bool,
}

/// `||d^j (mu_1 - mu_2)|| <= C ||Lambda_1 - Lambda_2||_*^{delta_j}` over the sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneSidedCheck {
    pub order: u32,
    pub exponent: f64,
    /// Constant calibrated at the largest `eps`.
    pub constant: Option<f64>,
    /// Smallest constant valid at every point.
    pub constant_sup: Option<f64>,
    /// `eps` values where the calibrated inequality fails.
    pub violations: Vec<f64>,
}

impl OneSidedCheck {
    pub fn holds(&self) -> bool {
        self.constant.is_some_and(f64::is_finite) && self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub perturbation: PerturbationSpec,
    pub h_order: u32,
    /// Predicted exponents `delta_j`, `j = 0..=h`.
    pub predicted: Vec<f64>,
    pub rows: Vec<StabilityRow>,
    /// Log-log slopes of `sup |d^j_nu (mu_1 - mu_2)|` against the star norm.
    pub slopes: Vec<Option<LogLogFit>>,
    pub tensor_slope: Option<LogLogFit>,
    /// `max sup|mu_1 - mu_2| / ||Lambda_1 - Lambda_2||_*` over the sweep.
    pub ratio_bound: Option<f64>,
    pub one_sided: Vec<OneSidedCheck>,
    pub comparability: f64,
    pub warnings: Vec<String>,
    pub medium_fingerprint: String,
}

impl StabilityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,star_norm,star_iterations,boundary_sup");
        for j in 0..=self.h_order {
            out.push_str(&format!(",d{j}"));
        }
        out.push_str(",tensor_gap,ch_norm,nonlinear\n");
        for r in &self.rows {
            out.push_str(&format!("{:e},{:e},{},{:e}", r.eps, r.star_norm, r.star_iterations, r.boundary_sup));
            for d in &r.normal_derivatives {
                out.push_str(&format!(",{d:e}"));
            }
            out.push_str(&format!(",{:e},{:e},{}\n", r.tensor_gap, r.ch_norm, r.nonlinear));
        }
        out
    }
}

/// Smallest amplitude accepted in a sweep.
pub const EPS_FLOOR: f64 = DEFAULT_TOLERANCE * 1e2;

/// Geometric sweep `start, start/2, ...` with `count` points.
pub fn geometric_sweep(start: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start * 0.5f64.powi(i as i32)).collect()
}

struct Computed {
    row: StabilityRow,
    admissible: bool,
}

/// Run the sweep: for each `eps` perturb `mu_a` of `base`, assemble both D-N
/// maps and compare the star norm of the difference with boundary quantities.
pub fn run_stability_experiment(
    base: &OpticalMedium,
    spec: &PerturbationSpec,
    h: u32,
    eps: &[f64],
    seed: u64,
) -> Result<StabilityReport> {
    spec.validate()?;
    let ap = base.apriori;
    ap.k_ranges()?.require(ap.k)?;
    if h >= 1 && !base.b_support_interior() {
        return Err(Error::domain("B must vanish near the boundary for derivative estimates"));
    }
    if h > 2 {
        return Err(Error::domain("derivative order above 2 is not supported"));
    }
    let grid = base.grid;
    let mut warnings = Vec::new();
    let mut sweep: Vec<f64> = Vec::new();
    for &e in eps {
        if e.abs() < EPS_FLOOR {
            warnings.push(format!("eps = {e:e} below the floor {EPS_FLOOR:e}, skipped"));
        } else {
            sweep.push(e);
        }
    }
    if sweep.is_empty() {
        return Err(Error::domain("empty amplitude sweep"));
    }
    let nu = build_nu_tilde(grid);
    let scale = SobolevScale::new(grid)?;
    let lambda1 = assemble_dn(base)?;
    let spacing = grid.h();

    let computed: Vec<Computed> = sweep
        .par_iter()
        .map(|&e| -> Result<Computed> {
            let delta = spec.sample(&grid, e);
            let mu2: Vec<f64> = base.mu_a.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let m2 = base.with_mu_a(mu2)?;
            let admissible = m2.admissibility().violations.is_empty();
            let lambda2: DNOperator = assemble_dn(&m2)?;
            let diff = lambda1.difference(&lambda2)?;
            let sn = star_norm(&diff, &scale, seed)?;
            let boundary_sup = grid.boundary_nodes().iter().map(|&p| delta[p].abs()).fold(0.0, f64::max);
            let normal_derivatives = (0..=h)
                .map(|j| normal_derivative_sup(&delta, &nu, j, spacing).map(|d| d.value))
                .collect::<Result<Vec<_>>>()?;
            let tensor_gap = tensor_derivative_gap(base, &m2, h)?.chain_rule;
            Ok(Computed {
                row: StabilityRow {
                    eps: e,
                    star_norm: sn.value,
                    star_iterations: sn.iterations,
                    boundary_sup,
                    normal_derivatives,
                    tensor_gap,
                    ch_norm: discrete_ch_norm(&grid, &delta, h),
                    nonlinear: false,
                },
                admissible,
            })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for c in computed {
        if !c.admissible {
            warnings.push(format!("eps = {:e} breaks admissibility, removed", c.row.eps));
        } else if c.row.ch_norm > spec.holder_bound {
            warnings.push(format!("eps = {:e} exceeds the C^h bound, removed", c.row.eps));
        } else {
            rows.push(c.row);
        }
    }
    if let Some(small) = rows.iter().min_by(|a, b| a.eps.abs().total_cmp(&b.eps.abs())) {
        let base_rate = small.star_norm / small.eps.abs();
        for r in &mut rows {
            r.nonlinear = ((r.star_norm / r.eps.abs()) / base_rate - 1.0).abs() > 0.1;
        }
    }

    let stars: Vec<f64> = rows.iter().map(|r| r.star_norm).collect();
    let predicted: Vec<f64> = (0..=h).map(|j| delta_h(spec.alpha, j)).collect::<Result<_>>()?;
    let slopes: Vec<Option<LogLogFit>> = (0..=h as usize)
        .map(|j| loglog_fit(&stars, &rows.iter().map(|r| r.normal_derivatives[j]).collect::<Vec<_>>()))
        .collect();
    let tensor_slope = loglog_fit(&stars, &rows.iter().map(|r| r.tensor_gap).collect::<Vec<_>>());
    let ratio_bound = rows
        .iter()
        .filter(|r| r.star_norm > 0.0)
        .map(|r| r.boundary_sup / r.star_norm)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));

    let largest = rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.eps.abs().total_cmp(&b.1.eps.abs()))
        .map(|(i, _)| i);
    let one_sided = (0..=h)
        .map(|j| {
            let ex = predicted[j as usize];
            let ratio = |r: &StabilityRow| r.normal_derivatives[j as usize] / r.star_norm.powf(ex);
            let constant = largest.map(|i| ratio(&rows[i]));
            let constant_sup = rows.iter().map(ratio).fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
            let violations = match constant {
                Some(c) => rows
                    .iter()
                    .filter(|r| r.normal_derivatives[j as usize] > c * r.star_norm.powf(ex) * (1.0 + 1e-12))
                    .map(|r| r.eps)
                    .collect(),
                None => Vec::new(),
            };
            OneSidedCheck {
                order: j,
                exponent: ex,
                constant,
                constant_sup,
                violations,
            }
        })
        .collect();

    Ok(StabilityReport {
        perturbation: *spec,
        h_order: h,
        predicted,
        rows,
        slopes,
        tensor_slope,
        ratio_bound,
        one_sided,
        comparability: nu.comparability,
        warnings,
        medium_fingerprint: base.fingerprint(),
    })
}
