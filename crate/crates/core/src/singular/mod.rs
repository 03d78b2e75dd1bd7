//! Singular solutions of `div(K(z) grad u) = 0` with an isolated singularity of
//! order `2 - n - m` at `z`, built from complex Gegenbauer polynomials, plus the
//! truncated Laplace kernel and the numerical correction term.
//!
//! All fractional powers of complex numbers use the principal branch,
//! `arg in (-pi, pi]`. For an admissible tensor the quadratic form
//! `K^{-1}(z) v . v` has argument in `(-pi/2, 0)`, so no evaluation comes near
//! the cut.

pub mod correction;
pub mod laplace;

use nalgebra::DMatrix;

use crate::gegenbauer::GegenbauerSpec;
use crate::medium::diffusion_tensor_inverse;
use crate::{Error, Result, C64};

/// Frozen tensor `K^{-1}(z)` at a singularity point.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularityPoint {
    z: Vec<f64>,
    k_inv: DMatrix<C64>,
}

impl SingularityPoint {
    pub fn new(z: Vec<f64>, k_inv: DMatrix<C64>) -> Result<Self> {
        let n = z.len();
        if !(3..=crate::gegenbauer::MAX_DIMENSION as usize).contains(&n) {
            return Err(Error::domain(format!("dimension {n} outside 3..=16")));
        }
        if k_inv.nrows() != n || k_inv.ncols() != n {
            return Err(Error::Shape(format!("K^-1 must be {n}x{n}")));
        }
        let scale = k_inv.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for i in 0..n {
            for j in 0..i {
                if (k_inv[(i, j)] - k_inv[(j, i)]).norm() > 1e-12 * scale {
                    return Err(Error::domain("frozen tensor K^-1(z) is not symmetric"));
                }
            }
        }
        Ok(Self { z, k_inv })
    }

    /// `K^{-1}(z) = n((mu_a - ik) I + (I - B) mu_s)` from coefficient values at `z`.
    pub fn from_coefficients(z: Vec<f64>, mu_a: f64, mu_s: f64, b: &DMatrix<f64>, k: f64) -> Result<Self> {
        Self::new(z, diffusion_tensor_inverse(mu_a, mu_s, b, k))
    }

    /// `K^{-1}(z) = c I`.
    pub fn isotropic(z: Vec<f64>, c: C64) -> Result<Self> {
        let n = z.len();
        Self::new(z, DMatrix::from_diagonal_element(n, n, c))
    }

    pub fn dimension(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn k_inv(&self) -> &DMatrix<C64> {
        &self.k_inv
    }

    /// `(K^{-1})_{(n)}(z)`.
    pub fn last_row(&self) -> Vec<C64> {
        let n = self.dimension();
        (0..n).map(|j| self.k_inv[(n - 1, j)]).collect()
    }

    /// `(K^{-1})_{nn}(z)`.
    pub fn last_entry(&self) -> C64 {
        let n = self.dimension();
        self.k_inv[(n - 1, n - 1)]
    }

    fn offset(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dimension() {
            return Err(Error::Shape("point dimension".into()));
        }
        let v: Vec<f64> = x.iter().zip(&self.z).map(|(a, b)| a - b).collect();
        if v.iter().all(|c| *c == 0.0) {
            return Err(Error::Singularity(format!("x = z = {:?}", self.z)));
        }
        Ok(v)
    }

    /// `K^{-1}(z) v . v` (bilinear, no conjugation).
    pub fn quadratic_form(&self, v: &[f64]) -> C64 {
        let n = self.dimension();
        let mut s = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                s += self.k_inv[(i, j)] * (v[i] * v[j]);
            }
        }
        s
    }

    fn last_row_dot(&self, v: &[f64]) -> C64 {
        let n = self.dimension();
        (0..n).map(|j| self.k_inv[(n - 1, j)] * v[j]).sum()
    }
}

/// Order `m` singular solution at a frozen point.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSolutionSpec {
    pub m: u32,
    pub at: SingularityPoint,
}

impl SingularSolutionSpec {
    pub fn new(m: u32, at: SingularityPoint) -> Result<Self> {
        if m > crate::gegenbauer::MAX_DEGREE {
            return Err(Error::domain(format!("order {m} above the supported cap")));
        }
        Ok(Self { m, at })
    }
}

/// `w^e` on the principal branch.
pub fn principal_branch_power(w: C64, exponent: f64) -> Result<C64> {
    if w == C64::new(0.0, 0.0) {
        return Err(Error::domain("principal power of zero"));
    }
    if w.im == 0.0 && w.re > 0.0 {
        return Ok(C64::new(w.re.powf(exponent), 0.0));
    }
    Ok((w.ln() * exponent).exp())
}

/// True when `w` lies within `1e-9` of the branch cut in argument.
pub fn near_branch_cut(w: C64) -> bool {
    w.arg().abs() > std::f64::consts::PI - 1e-9
}

/// Branch diagnostics of the quantities raised to fractional powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchDiagnostics {
    pub arg_quadratic_form: f64,
    pub arg_last_entry: f64,
    pub near_cut: bool,
}

pub fn branch_diagnostics(spec: &SingularSolutionSpec, x: &[f64]) -> Result<BranchDiagnostics> {
    let v = spec.at.offset(x)?;
    let q = spec.at.quadratic_form(&v);
    let knn = spec.at.last_entry();
    Ok(BranchDiagnostics {
        arg_quadratic_form: q.arg(),
        arg_last_entry: knn.arg(),
        near_cut: near_branch_cut(q) || near_branch_cut(knn) || near_branch_cut(q * knn),
    })
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(f64::from).product()
}

/// `u_0(x) = (K^{-1}(z)(x - z) . (x - z))^{(2-n)/2}`.
pub fn fundamental_solution(at: &SingularityPoint, x: &[f64]) -> Result<C64> {
    let v = at.offset(x)?;
    let n = at.dimension() as f64;
    principal_branch_power(at.quadratic_form(&v), (2.0 - n) / 2.0)
}

struct LeadingParts {
    q: C64,
    knn: C64,
    root: C64,
    tau: C64,
    gegenbauer: GegenbauerSpec,
    v: Vec<f64>,
}

fn leading_parts(spec: &SingularSolutionSpec, x: &[f64]) -> Result<LeadingParts> {
    let at = &spec.at;
    let v = at.offset(x)?;
    let q = at.quadratic_form(&v);
    let knn = at.last_entry();
    let root = principal_branch_power(knn * q, 0.5)?;
    let tau = at.last_row_dot(&v) / root;
    Ok(LeadingParts {
        q,
        knn,
        root,
        tau,
        gegenbauer: GegenbauerSpec::new(spec.m, at.dimension() as u32)?,
        v,
    })
}

/// `u_m(x) = Q^{(2-n-m)/2} m! (K^{-1}_{nn})^{m/2} C_m^{(n-2)/2}(K^{-1}_{(n)}(x-z) / sqrt(K^{-1}_{nn} Q))`
/// with `Q = K^{-1}(z)(x-z).(x-z)`.
pub fn leading_term(spec: &SingularSolutionSpec, x: &[f64]) -> Result<C64> {
    let p = leading_parts(spec, x)?;
    let n = spec.at.dimension() as f64;
    let m = spec.m as f64;
    Ok(principal_branch_power(p.q, (2.0 - n - m) / 2.0)?
        * factorial(spec.m)
        * principal_branch_power(p.knn, m / 2.0)?
        * p.gegenbauer.eval(p.tau))
}

/// Analytic gradient of [`leading_term`] with respect to `x`.
pub fn leading_term_gradient(spec: &SingularSolutionSpec, x: &[f64]) -> Result<Vec<C64>> {
    let p = leading_parts(spec, x)?;
    let at = &spec.at;
    let n = at.dimension();
    let m = spec.m as f64;
    let e = (2.0 - n as f64 - m) / 2.0;
    let pre = principal_branch_power(p.knn, m / 2.0)? * factorial(spec.m);
    let qp = principal_branch_power(p.q, e)?;
    let c = p.gegenbauer.eval(p.tau);
    let dc = p.gegenbauer.derivative(p.tau);
    let row = at.last_row();
    Ok((0..n)
        .map(|i| {
            let dq: C64 = (0..n).map(|j| at.k_inv[(i, j)] * p.v[j]).sum::<C64>() * 2.0;
            let dtau = row[i] / p.root - p.tau * dq / (p.q * 2.0);
            pre * (qp * e / p.q * dq * c + qp * dc * dtau)
        })
        .collect())
}

/// Remark-style isotropic form `m! c^{(2-n)/2} |x-z|^{2-n-m} C_m((x-z)_n / |x-z|)`
/// where `K^{-1}(z) = n c I`. Errors if the frozen tensor is not scalar.
pub fn leading_term_isotropic(spec: &SingularSolutionSpec, x: &[f64]) -> Result<C64> {
    let at = &spec.at;
    let n = at.dimension();
    let d = at.k_inv[(0, 0)];
    let scale = d.norm();
    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { d } else { C64::new(0.0, 0.0) };
            if (at.k_inv[(i, j)] - expect).norm() > 1e-12 * scale {
                return Err(Error::domain("frozen tensor is not a multiple of the identity"));
            }
        }
    }
    let c = d / n as f64;
    let v = at.offset(x)?;
    let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let g = GegenbauerSpec::new(spec.m, n as u32)?;
    let nf = n as f64;
    Ok(principal_branch_power(c, (2.0 - nf) / 2.0)?
        * factorial(spec.m)
        * r.powf(2.0 - nf - spec.m as f64)
        * g.eval_real(v[n - 1] / r))
}

/// Largest order accepted by [`um_via_induction`].
pub const INDUCTION_MAX_ORDER: u32 = 8;

/// `d^m/dy_n^m` of `(K^{-1}(z)(x-y).(x-y))^{(2-n)/2}` at `y = z`, summed term by
/// term:
/// `sum_j [prod_{i<m-j} (a - i)] m! / (j! (m-2j)!) b^{m-2j} K_nn^j Q^{a-m+j}`
/// with `a = (2-n)/2` and `b = -2 K^{-1}_{(n)}(x-z)`.
pub fn um_via_induction(spec: &SingularSolutionSpec, x: &[f64]) -> Result<C64> {
    if spec.m > INDUCTION_MAX_ORDER {
        return Err(Error::domain(format!("induction oracle limited to m <= {INDUCTION_MAX_ORDER}")));
    }
    let at = &spec.at;
    let v = at.offset(x)?;
    let q = at.quadratic_form(&v);
    let knn = at.last_entry();
    let b = at.last_row_dot(&v) * -2.0;
    let a = (2.0 - at.dimension() as f64) / 2.0;
    let m = spec.m;
    let mut sum = C64::new(0.0, 0.0);
    for j in 0..=m / 2 {
        let falling: f64 = (0..(m - j)).map(|i| a - i as f64).product();
        let comb = factorial(m) / (factorial(j) * factorial(m - 2 * j));
        sum += b.powi((m - 2 * j) as i32) * knn.powi(j as i32) * principal_branch_power(q, a - m as f64 + j as f64)? * (falling * comb);
    }
    Ok(sum)
}

/// `(2-n-m)^2 C_m(t)^2 + C_m'(t)^2 (1 - t^2)`, the squared gradient of the
/// isotropic singular solution at unit distance.
pub fn gradient_lower_bracket(m: u32, n: u32, t: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("t = {t} outside [-1, 1]")));
    }
    let g = GegenbauerSpec::new(m, n)?;
    let z = C64::new(t, 0.0);
    let c = g.eval(z).re;
    let dc = g.derivative(z).re;
    let k = 2.0 - n as f64 - m as f64;
    Ok(k * k * c * c + dc * dc * (1.0 - t * t))
}

/// Minimum of [`gradient_lower_bracket`] over `points` equispaced nodes of
/// `[-1, 1]`, returned as `(t, value)`.
pub fn bracket_minimum(m: u32, n: u32, points: usize) -> Result<(f64, f64)> {
    if points < 2 {
        return Err(Error::domain("need at least two grid points"));
    }
    let mut best = (0.0, f64::INFINITY);
    for i in 0..points {
        let t = -1.0 + 2.0 * i as f64 / (points - 1) as f64;
        let v = gradient_lower_bracket(m, n, t)?;
        if v < best.1 {
            best = (t, v);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn principal_powers() {
        assert!((principal_branch_power(c(4.0, 0.0), 0.5).unwrap() - c(2.0, 0.0)).norm() < 1e-15);
        let s = principal_branch_power(c(0.0, 1.0), 0.5).unwrap();
        assert!((s - c(1.0, 1.0) / 2f64.sqrt()).norm() < 1e-15);
        let w = c(2.0, -1.0);
        let r = principal_branch_power(w, -0.5).unwrap();
        assert!(r.im > 0.0);
        assert!((r * r * w - c(1.0, 0.0)).norm() < 1e-14);
        assert!(principal_branch_power(c(0.0, 0.0), 0.5).is_err());
        assert!(near_branch_cut(c(-1.0, 0.0)));
        assert!(!near_branch_cut(c(-1.0, -1e-3)));
    }

    #[test]
    fn fundamental_solution_values() {
        let at = SingularityPoint::isotropic(vec![0.0; 3], c(4.0, 0.0)).unwrap();
        assert!((fundamental_solution(&at, &[0.0, 1.0, 0.0]).unwrap() - c(0.5, 0.0)).norm() < 1e-15);
        let u1 = fundamental_solution(&at, &[0.3, 0.2, 0.1]).unwrap();
        let u2 = fundamental_solution(&at, &[0.6, 0.4, 0.2]).unwrap();
        assert!((u2 - u1 * 0.5).norm() < 1e-14);
        let cc = c(6.0, -3.0);
        let at = SingularityPoint::isotropic(vec![0.0; 3], cc).unwrap();
        let expect = (cc.ln() * -0.5).exp();
        assert!((fundamental_solution(&at, &[0.0, 0.0, 1.0]).unwrap() - expect).norm() < 1e-15);
        assert!(matches!(fundamental_solution(&at, &[0.0; 3]), Err(Error::Singularity(_))));
    }

    #[test]
    fn first_order_isotropic_by_hand() {
        let cc = c(2.0, -1.0);
        let spec = SingularSolutionSpec::new(1, SingularityPoint::isotropic(vec![0.1, 0.2, 0.3], cc).unwrap()).unwrap();
        let x = [0.5, -0.1, 0.9];
        let v = [0.4, -0.3, 0.6];
        let r: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let expect = (cc.ln() * -0.5).exp() * v[2] / r.powi(3);
        assert!((leading_term(&spec, &x).unwrap() - expect).norm() < 1e-14);
        assert!((um_via_induction(&spec, &x).unwrap() - expect).norm() < 1e-14);
    }

    #[test]
    fn isotropic_form_of_order_zero() {
        let z = vec![0.0; 3];
        let spec = SingularSolutionSpec::new(0, SingularityPoint::isotropic(z, c(2.0, -1.0) * 3.0).unwrap()).unwrap();
        let v = leading_term_isotropic(&spec, &[0.0, 1.0, 0.0]).unwrap();
        assert!((v - (c(2.0, -1.0).ln() * -0.5).exp()).norm() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_difference() {
        let k = DMatrix::from_row_slice(3, 3, &[
            c(3.0, -1.0), c(0.2, 0.0), c(-0.1, 0.0),
            c(0.2, 0.0), c(2.5, -1.0), c(0.3, 0.0),
            c(-0.1, 0.0), c(0.3, 0.0), c(2.8, -1.0),
        ]);
        for m in 0..4 {
            let spec = SingularSolutionSpec::new(m, SingularityPoint::new(vec![0.0; 3], k.clone()).unwrap()).unwrap();
            let x = [0.4, -0.3, 0.5];
            let g = leading_term_gradient(&spec, &x).unwrap();
            for i in 0..3 {
                let d = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[i] += d;
                xm[i] -= d;
                let fd = (leading_term(&spec, &xp).unwrap() - leading_term(&spec, &xm).unwrap()) / (2.0 * d);
                assert!((fd - g[i]).norm() <= 1e-7 * g[i].norm().max(1.0), "m={m} i={i}");
            }
        }
    }

    #[test]
    fn bracket_examples() {
        assert_eq!(gradient_lower_bracket(0, 3, 0.3).unwrap(), 1.0);
        assert_eq!(gradient_lower_bracket(0, 5, -0.9).unwrap(), 9.0);
        assert!((gradient_lower_bracket(1, 3, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(gradient_lower_bracket(1, 3, 1.5).is_err());
    }
}
