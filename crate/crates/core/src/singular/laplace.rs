//! Fundamental solution of the Laplacian, its truncation by the first terms of
//! the Gegenbauer expansion, and the truncated Newtonian potential in three
//! dimensions.

use rayon::prelude::*;
use std::f64::consts::PI;

use crate::fd::fornberg_weights;
use crate::gegenbauer::GegenbauerSpec;
use crate::quadrature::Rule;
use crate::{Error, Result, C64};

/// Surface area of the unit sphere in `R^n`.
pub fn unit_sphere_area(n: u32) -> f64 {
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 2.0) * unit_sphere_area(n - 2),
    }
}

/// `C_n = 1 / ((n - 2) |S^{n-1}|)`, so that `Gamma = -C_n |x|^{2-n}` satisfies
/// `Delta Gamma = delta`.
pub fn laplace_constant(n: u32) -> f64 {
    1.0 / ((n as f64 - 2.0) * unit_sphere_area(n))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `Gamma(v) = -C_n |v|^{2-n}`.
pub fn laplace_fundamental(v: &[f64]) -> Result<f64> {
    let n = v.len() as u32;
    if n < 3 {
        return Err(Error::domain("dimension must be at least 3"));
    }
    let r = norm(v);
    if r == 0.0 {
        return Err(Error::Singularity("Laplace kernel at the origin".into()));
    }
    Ok(-laplace_constant(n) * r.powf(2.0 - n as f64))
}

/// `|y|^j / |x|^{j+n-2} C_j^{(n-2)/2}(x^ . y^)`, the `j`-th term of the
/// expansion of `|x - y|^{2-n}` for `|y| < |x|`.
fn expansion_term(j: u32, n: u32, rx: f64, ry: f64, t: f64) -> Result<f64> {
    if ry == 0.0 {
        return Ok(if j == 0 { rx.powf(2.0 - n as f64) } else { 0.0 });
    }
    let g = GegenbauerSpec::new(j, n)?;
    Ok(ry.powi(j as i32) / rx.powf(j as f64 + n as f64 - 2.0) * g.eval_real(t))
}

/// `Gamma_nu(x - y) = Gamma(x - y) + C_n sum_{j=0}^{nu} |y|^j / |x|^{j+n-2} C_j(x^ . y^)`;
/// `nu = -1` gives `Gamma` itself.
pub fn truncated_laplace_kernel(x: &[f64], y: &[f64], nu: i32) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape("x and y dimensions differ".into()));
    }
    if nu < -1 {
        return Err(Error::domain("truncation order must be at least -1"));
    }
    let n = x.len() as u32;
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let gamma = laplace_fundamental(&d)?;
    if nu < 0 {
        return Ok(gamma);
    }
    let rx = norm(x);
    if rx == 0.0 {
        return Err(Error::Singularity("truncated kernel needs x != 0".into()));
    }
    let ry = norm(y);
    let t = if ry > 0.0 {
        (x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / (rx * ry)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let mut s = 0.0;
    for j in 0..=nu as u32 {
        s += expansion_term(j, n, rx, ry, t)?;
    }
    Ok(gamma + laplace_constant(n) * s)
}

/// Truncation order `floor(s) - n` for a non-integral decay rate `s > n`.
pub fn truncation_order(s: f64, n: u32) -> Result<i32> {
    if !(s > n as f64) || s.fract() == 0.0 {
        return Err(Error::domain(format!("decay rate s = {s} must be non-integral and exceed n = {n}")));
    }
    Ok(s.floor() as i32 - n as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialOptions {
    /// Radius of the ball `B_R` integrated over, centred at the origin.
    pub radius: f64,
    /// Relative change between successive refinement levels accepted as converged.
    pub tolerance: f64,
    /// Highest refinement level tried before giving up.
    pub max_level: usize,
}

impl Default for PotentialOptions {
    fn default() -> Self {
        Self {
            radius: 1.0,
            tolerance: 1e-9,
            max_level: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialValue {
    pub value: C64,
    /// Relative change at the last refinement.
    pub achieved: f64,
    pub level: usize,
}

/// Legendre polynomials `P_0..=P_jmax` at `t`.
fn legendre_all(jmax: usize, t: f64) -> Vec<f64> {
    let mut p = vec![1.0; jmax + 1];
    if jmax >= 1 {
        p[1] = t;
    }
    for j in 2..=jmax {
        p[j] = ((2 * j - 1) as f64 * t * p[j - 1] - (j - 1) as f64 * p[j - 2]) / j as f64;
    }
    p
}

/// Three-dimensional `Gamma_nu` in coordinates relative to `x`: `rho = |y|`,
/// `theta` the angle between `x` and `y`. Inside `|y| < |x|/2` the kernel is
/// evaluated as the convergent tail `-C_3 sum_{j > nu}` to avoid cancellation.
fn kernel3(r: f64, rho: f64, theta: f64, nu: i32) -> f64 {
    let c3 = laplace_constant(3);
    let t = theta.cos();
    let ratio = rho / r;
    if ratio < 0.5 {
        let jmax = ((-40.0 / ratio.max(1e-300).log2()).ceil() as usize + 2).clamp(nu.max(0) as usize + 2, 200);
        let p = legendre_all(jmax, t);
        let mut s = 0.0;
        let mut pow = ratio.powi(nu + 1);
        for (j, pj) in p.iter().enumerate().skip((nu + 1) as usize) {
            s += pow * pj;
            pow *= ratio;
            if pow < 1e-18 && j > (nu + 1) as usize {
                break;
            }
        }
        return -c3 * s / r;
    }
    let half = (0.5 * theta).sin();
    let dist = ((r - rho).powi(2) + 4.0 * r * rho * half * half).sqrt();
    let mut s = 0.0;
    if nu >= 0 {
        let p = legendre_all(nu as usize, t);
        let mut pow = 1.0;
        for pj in p {
            s += pow * pj;
            pow *= ratio;
        }
    }
    -c3 / dist + c3 * s / r
}

fn orthonormal_frame(a: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = helper[0] * a[0] + helper[1] * a[1] + helper[2] * a[2];
    let mut e1 = [helper[0] - d * a[0], helper[1] - d * a[1], helper[2] - d * a[2]];
    let n1 = norm(&e1);
    e1.iter_mut().for_each(|v| *v /= n1);
    let e2 = [
        a[1] * e1[2] - a[2] * e1[1],
        a[2] * e1[0] - a[0] * e1[2],
        a[0] * e1[1] - a[1] * e1[0],
    ];
    (e1, e2)
}

/// Number of dyadic panels between the origin and `|x|/2`.
const ORIGIN_PANELS: i32 = 80;

fn potential_at_level<F>(f: &F, nu: i32, x: [f64; 3], radius: f64, level: usize) -> C64
where
    F: Fn([f64; 3]) -> C64 + Sync + ?Sized,
{
    let r = norm(&x);
    let xh = [x[0] / r, x[1] / r, x[2] / r];
    let (e1, e2) = orthonormal_frame(xh);
    let grade = 10 + 4 * level as i32;
    let pts = 6 + 2 * level;
    let smooth_pts = 12 + 4 * level;
    let nphi = 16 + 8 * level;
    let radial = Rule::gauss(pts);
    let angular_panel = Rule::gauss(pts);
    let angular_smooth = Rule::gauss(smooth_pts);

    let mut breaks: Vec<f64> = (1..=ORIGIN_PANELS).rev().map(|k| r * 0.5f64.powi(k)).collect();
    breaks.insert(0, 0.0);
    for i in 0..=grade {
        breaks.push(r - 0.5 * r * 0.5f64.powi(i));
    }
    breaks.push(r);
    for i in (0..=grade).rev() {
        breaks.push(r + r * 0.5f64.powi(i));
    }
    let mut outer = 4.0 * r;
    while outer < radius {
        breaks.push(outer);
        outer *= 2.0;
    }
    breaks.push(radius);
    breaks.retain(|&b| b <= radius);
    breaks.dedup();
    // The innermost interval [0, r 2^-80] is dropped.
    let panels: Vec<(f64, f64)> = breaks.windows(2).skip(1).map(|w| (w[0], w[1])).filter(|(a, b)| b > a).collect();

    let mut theta_breaks: Vec<f64> = (0..=grade).map(|i| PI * 0.5f64.powi(i)).collect();
    theta_breaks.push(0.0);
    theta_breaks.reverse();

    let dphi = 2.0 * PI / nphi as f64;
    let phis: Vec<(f64, f64)> = (0..nphi).map(|k| ((k as f64 * dphi).cos(), (k as f64 * dphi).sin())).collect();

    let partial: Vec<C64> = panels
        .par_iter()
        .map(|&(a, b)| {
            let near = a >= 0.5 * r * (1.0 - 1e-12) && b <= 2.0 * r * (1.0 + 1e-12);
            let mut acc = C64::new(0.0, 0.0);
            for (rho, wr) in radial.mapped(a, b) {
                let mut angular = |lo: f64, hi: f64, rule: &Rule| {
                    for (th, wt) in rule.mapped(lo, hi) {
                        let k = kernel3(r, rho, th, nu);
                        let (st, ct) = th.sin_cos();
                        let mut sum_phi = C64::new(0.0, 0.0);
                        for &(cp, sp) in &phis {
                            let y = [0, 1, 2].map(|i| rho * (ct * xh[i] + st * (cp * e1[i] + sp * e2[i])));
                            sum_phi += f(y);
                        }
                        acc += sum_phi * (wr * wt * dphi * rho * rho * st * k);
                    }
                };
                if near {
                    for w in theta_breaks.windows(2) {
                        angular(w[0], w[1], &angular_panel);
                    }
                } else {
                    angular(0.0, PI, &angular_smooth);
                }
            }
            acc
        })
        .collect();
    partial.into_iter().sum()
}

/// `u(x) = int_{B_R} Gamma_nu(x, y) f(y) dy` in three dimensions by nested
/// Gauss rules on dyadic shells graded towards `|y| = |x|` and, on those
/// shells, polar angles graded towards `y || x`. The rule is refined until two
/// successive levels agree to the requested tolerance.
pub fn newtonian_potential_truncated<F>(f: &F, nu: i32, x: [f64; 3], opts: &PotentialOptions) -> Result<PotentialValue>
where
    F: Fn([f64; 3]) -> C64 + Sync + ?Sized,
{
    let r = norm(&x);
    if r == 0.0 {
        return Err(Error::Singularity("potential evaluated at the origin".into()));
    }
    if !(r < opts.radius) {
        return Err(Error::domain("evaluation point must lie inside the ball"));
    }
    if nu < -1 {
        return Err(Error::domain("truncation order must be at least -1"));
    }
    let mut prev = potential_at_level(f, nu, x, opts.radius, 0);
    let mut achieved = f64::INFINITY;
    for level in 1..=opts.max_level {
        let cur = potential_at_level(f, nu, x, opts.radius, level);
        let diff = (cur - prev).norm();
        achieved = if cur.norm() > 0.0 { diff / cur.norm() } else { diff };
        if achieved <= opts.tolerance {
            return Ok(PotentialValue {
                value: cur,
                achieved,
                level,
            });
        }
        prev = cur;
    }
    Err(Error::QuadratureBudget {
        achieved,
        requested: opts.tolerance,
    })
}

/// Sixth-order finite-difference Laplacian of a function of three variables.
pub fn laplacian_fd(u: impl Fn([f64; 3]) -> Result<C64>, x: [f64; 3], delta: f64) -> Result<C64> {
    let offs: Vec<f64> = (-3..=3).map(|i| i as f64).collect();
    let w = fornberg_weights(0.0, &offs, 2);
    let mut s = C64::new(0.0, 0.0);
    for a in 0..3 {
        for (i, &o) in offs.iter().enumerate() {
            let mut y = x;
            y[a] += o * delta;
            s += u(y)? * w[2][i];
        }
    }
    Ok(s / (delta * delta))
}

/// `max over sampled points of |y|^s |f(y)|` on each dyadic shell
/// `2^{-k-1} R < |y| < 2^{-k} R`, a discrete check of the decay hypothesis.
pub fn dyadic_shell_profile<F>(f: &F, s: f64, radius: f64, shells: usize, samples: usize) -> Vec<f64>
where
    F: Fn([f64; 3]) -> C64 + ?Sized,
{
    (0..shells)
        .map(|k| {
            let hi = radius * 0.5f64.powi(k as i32);
            let mut best = 0.0f64;
            for i in 0..samples {
                // points on a Fibonacci sphere at several radii inside the shell
                let rho = hi * (0.5 + 0.5 * (i as f64 + 0.5) / samples as f64);
                let zc = 1.0 - 2.0 * (i as f64 + 0.5) / samples as f64;
                let phi = i as f64 * PI * (3.0 - 5f64.sqrt());
                let rr = (1.0 - zc * zc).sqrt();
                let y = [rho * rr * phi.cos(), rho * rr * phi.sin(), rho * zc];
                best = best.max(rho.powf(s) * f(y).norm());
            }
            best
        })
        .collect()
}
