//! Optical coefficients, the complex diffusion tensor
//! `K = (1/n) ((mu_a - ik) I + (I - B) mu_s)^{-1}` and its real/imaginary
//! split, admissibility checks and the admissible wave-number ranges.

use nalgebra::{DMatrix, Matrix2, Matrix3, SMatrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fd;
use crate::grid::GridDomain;
use crate::{Error, Result, C64};

/// Constants that every stability constant depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriData {
    /// Space dimension.
    pub n: u32,
    /// Sobolev exponent, `p > n`.
    pub p: f64,
    /// Two-sided bound for `mu_a` and `mu_s`.
    pub lambda: f64,
    /// `W^{1,p}` bound.
    #[serde(rename = "E")]
    pub sobolev_bound: f64,
    /// Ellipticity bound of `I - B`.
    #[serde(rename = "calE")]
    pub cal_e: f64,
    /// Wave number.
    pub k: f64,
    pub r0: f64,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    pub diam: f64,
    /// Hölder exponent, `0 < alpha < 1 - n/p`.
    pub alpha: f64,
}

impl AprioriData {
    pub fn validate(&self) -> Result<()> {
        let ptr = |f: &str| format!("/apriori/{f}");
        if self.n < 3 {
            return Err(Error::config(ptr("n"), "dimension must be at least 3"));
        }
        let positive = [
            ("lambda", self.lambda),
            ("E", self.sobolev_bound),
            ("calE", self.cal_e),
            ("k", self.k),
            ("r0", self.r0),
            ("L", self.lipschitz),
            ("diam", self.diam),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(ptr(name), format!("must be positive, got {v}")));
            }
        }
        if !(self.p > self.n as f64) {
            return Err(Error::config(ptr("p"), format!("must exceed n = {}", self.n)));
        }
        let cap = 1.0 - self.n as f64 / self.p;
        if !(self.alpha > 0.0 && self.alpha < cap) {
            return Err(Error::config(
                ptr("alpha"),
                format!("must lie in (0, 1 - n/p) = (0, {cap})"),
            ));
        }
        Ok(())
    }

    pub fn k_ranges(&self) -> Result<KRanges> {
        k_admissible_ranges(self.lambda, self.cal_e, self.n)
    }
}

/// Wave numbers for which the boundary stability estimates hold:
/// `0 < k <= k0` or `k >= k0_tilde`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KRanges {
    pub k0: f64,
    pub k0_tilde: f64,
}

impl KRanges {
    pub fn is_admissible(&self, k: f64) -> bool {
        (k > 0.0 && k <= self.k0) || k >= self.k0_tilde
    }

    pub fn require(&self, k: f64) -> Result<()> {
        if self.is_admissible(k) {
            Ok(())
        } else {
            Err(Error::InadmissibleWaveNumber {
                k,
                k0: self.k0,
                k0_tilde: self.k0_tilde,
            })
        }
    }
}

/// Closed-form endpoints of the admissible wave-number ranges.
pub fn k_admissible_ranges(lambda: f64, cal_e: f64, n: u32) -> Result<KRanges> {
    if n < 3 {
        return Err(Error::domain(format!("dimension must be at least 3, got {n}")));
    }
    if !(lambda > 0.0 && cal_e > 0.0) {
        return Err(Error::domain("lambda and calE must be positive"));
    }
    let t = (std::f64::consts::PI / (2.0 * n as f64)).tan();
    let upper = lambda * (1.0 + cal_e);
    let lower = (1.0 + 1.0 / cal_e) / lambda;
    let k0 = ((upper * upper + lower * lower * t * t).sqrt() - upper) / t;
    let k0_tilde = (1.0 + (1.0 + t * t).sqrt()) / t * upper;
    Ok(KRanges { k0, k0_tilde })
}

/// `mu_a I + (I - B) mu_s`, the real part of `K^{-1} / n`.
fn real_part_of_scaled_inverse(mu_a: f64, mu_s: f64, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    DMatrix::identity(n, n) * (mu_a + mu_s) - b * mu_s
}

/// `K^{-1} = n ((mu_a - ik) I + (I - B) mu_s)`.
pub fn diffusion_tensor_inverse(mu_a: f64, mu_s: f64, b: &DMatrix<f64>, k: f64) -> DMatrix<C64> {
    let n = b.nrows();
    let a = real_part_of_scaled_inverse(mu_a, mu_s, b);
    DMatrix::from_fn(n, n, |i, j| {
        let im = if i == j { -k } else { 0.0 };
        C64::new(a[(i, j)], im) * n as f64
    })
}

/// The diffusion tensor, by complex LU with partial pivoting.
pub fn diffusion_tensor(mu_a: f64, mu_s: f64, b: &DMatrix<f64>, k: f64) -> Result<DMatrix<C64>> {
    let inv = diffusion_tensor_inverse(mu_a, mu_s, b, k);
    inv.lu().try_inverse().ok_or_else(|| Error::SingularMatrix {
        location: format!("mu_a={mu_a}, mu_s={mu_s}, k={k}"),
        detail: "n((mu_a - ik)I + (I - B)mu_s) is not invertible".into(),
    })
}

/// Real and imaginary parts of `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSplit {
    pub k_r: DMatrix<f64>,
    pub k_i: DMatrix<f64>,
}

/// `K_R = (1/n)(A^2 + k^2 I)^{-1} A` and `K_I = (k/n)(A^2 + k^2 I)^{-1}` with
/// `A = mu_a I + (I - B) mu_s`.
pub fn split_pointwise(mu_a: f64, mu_s: f64, b: &DMatrix<f64>, k: f64) -> Result<TensorSplit> {
    let n = b.nrows();
    let a = real_part_of_scaled_inverse(mu_a, mu_s, b);
    let s = (&a * &a + DMatrix::identity(n, n) * (k * k))
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix {
            location: format!("mu_a={mu_a}, mu_s={mu_s}, k={k}"),
            detail: "A^2 + k^2 I is not invertible".into(),
        })?;
    let nf = n as f64;
    Ok(TensorSplit {
        k_r: &s * &a / nf,
        k_i: s * (k / nf),
    })
}

/// `dK/dmu_a = -n K^2`.
pub fn diffusion_tensor_sensitivity(mu_a: f64, mu_s: f64, b: &DMatrix<f64>, k: f64) -> Result<DMatrix<C64>> {
    let kk = diffusion_tensor(mu_a, mu_s, b, k)?;
    let n = b.nrows() as f64;
    Ok(&kk * &kk * C64::new(-n, 0.0))
}

/// The 2x2 reaction matrix `[[mu_a, k], [-k, mu_a]]` of the real system.
pub fn q_matrix(mu_a: f64, k: f64) -> Matrix2<f64> {
    Matrix2::new(mu_a, k, -k, mu_a)
}

/// The real `2n x 2n` coefficient matrix `[[K_R, -K_I], [K_I, K_R]]`.
pub fn block_c(k_r: &DMatrix<f64>, k_i: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k_r.nrows();
    let mut c = DMatrix::zeros(2 * n, 2 * n);
    c.view_mut((0, 0), (n, n)).copy_from(k_r);
    c.view_mut((n, n), (n, n)).copy_from(k_r);
    c.view_mut((0, n), (n, n)).copy_from(&(-k_i));
    c.view_mut((n, 0), (n, n)).copy_from(k_i);
    c
}

fn to_dmatrix(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, j| m[(i, j)])
}

fn to_matrix3<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>) -> Matrix3<T> {
    Matrix3::from_fn(|i, j| m[(i, j)])
}

/// Coefficients sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalMedium {
    pub grid: GridDomain,
    pub apriori: AprioriData,
    pub mu_a: Vec<f64>,
    pub mu_s: Vec<f64>,
    /// `None` means `B = 0` everywhere.
    pub b: Option<Vec<Matrix3<f64>>>,
    /// Declared `C^h` smoothness of the coefficients near the boundary;
    /// `None` means smooth to any order.
    pub holder_order: Option<u32>,
}

impl OpticalMedium {
    pub fn new(
        grid: GridDomain,
        apriori: AprioriData,
        mu_a: Vec<f64>,
        mu_s: Vec<f64>,
        b: Option<Vec<Matrix3<f64>>>,
    ) -> Result<Self> {
        if apriori.n != 3 {
            return Err(Error::config("/apriori/n", "grid media are three-dimensional"));
        }
        let len = grid.len();
        if mu_a.len() != len || mu_s.len() != len || b.as_ref().is_some_and(|b| b.len() != len) {
            return Err(Error::Shape(format!("coefficient arrays must have {len} samples")));
        }
        Ok(Self {
            grid,
            apriori,
            mu_a,
            mu_s,
            b,
            holder_order: None,
        })
    }

    pub fn from_fns(
        grid: GridDomain,
        apriori: AprioriData,
        mu_a: impl Fn([f64; 3]) -> f64,
        mu_s: impl Fn([f64; 3]) -> f64,
        b: Option<&dyn Fn([f64; 3]) -> Matrix3<f64>>,
    ) -> Result<Self> {
        let b = b.map(|f| (0..grid.len()).map(|i| f(grid.coords(i))).collect());
        Self::new(grid, apriori, grid.sample_real(mu_a), grid.sample_real(mu_s), b)
    }

    pub fn homogeneous(grid: GridDomain, apriori: AprioriData, mu_a: f64, mu_s: f64) -> Result<Self> {
        Self::new(grid, apriori, vec![mu_a; grid.len()], vec![mu_s; grid.len()], None)
    }

    /// Same medium with a different absorption field.
    pub fn with_mu_a(&self, mu_a: Vec<f64>) -> Result<Self> {
        if mu_a.len() != self.grid.len() {
            return Err(Error::Shape("mu_a sample count".into()));
        }
        Ok(Self {
            mu_a,
            ..self.clone()
        })
    }

    pub fn k(&self) -> f64 {
        self.apriori.k
    }

    pub fn b_at(&self, i: usize) -> Matrix3<f64> {
        self.b.as_ref().map_or_else(Matrix3::zeros, |b| b[i])
    }

    pub fn tensor_at(&self, i: usize) -> Result<Matrix3<C64>> {
        diffusion_tensor(self.mu_a[i], self.mu_s[i], &to_dmatrix(&self.b_at(i)), self.k())
            .map(|m| to_matrix3(&m))
            .map_err(|e| match e {
                Error::SingularMatrix { detail, .. } => Error::SingularMatrix {
                    location: format!("node {i}"),
                    detail,
                },
                e => e,
            })
    }

    pub fn tensor_inverse_at_point(&self, i: usize) -> DMatrix<C64> {
        diffusion_tensor_inverse(self.mu_a[i], self.mu_s[i], &to_dmatrix(&self.b_at(i)), self.k())
    }

    /// True when `B` vanishes on the boundary nodes and on the first layer of
    /// interior nodes.
    pub fn b_support_interior(&self) -> bool {
        let Some(b) = &self.b else { return true };
        let last = self.grid.m() - 1;
        (0..self.grid.len()).all(|i| {
            let p = self.grid.ijk(i);
            let near = p.iter().any(|&c| c <= 1 || c + 1 >= last);
            !near || b[i].iter().all(|&v| v == 0.0)
        })
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.grid.fingerprint().as_bytes());
        h.update(serde_json::to_vec(&self.apriori).unwrap_or_default());
        for v in self.mu_a.iter().chain(&self.mu_s) {
            h.update(v.to_le_bytes());
        }
        if let Some(b) = &self.b {
            for m in b {
                for v in m.iter() {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    /// Pointwise checks of the coefficient bounds plus discrete `W^{1,p}`
    /// estimates.
    pub fn admissibility(&self) -> AdmissibilityReport {
        let ap = &self.apriori;
        let lam = ap.lambda;
        let mut violations = Vec::new();
        let mut range = |name: ViolationKind, v: &[f64]| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for (i, &x) in v.iter().enumerate() {
                lo = lo.min(x);
                hi = hi.max(x);
                if x < 1.0 / lam {
                    violations.push(Violation::new(i, name, x, 1.0 / lam));
                } else if x > lam {
                    violations.push(Violation::new(i, name, x, lam));
                }
            }
            [lo, hi]
        };
        let mu_a_range = range(ViolationKind::MuAOutOfRange, &self.mu_a);
        let mu_s_range = range(ViolationKind::MuSOutOfRange, &self.mu_s);

        let mut ib_range = [1.0, 1.0];
        if let Some(b) = &self.b {
            ib_range = [f64::INFINITY, f64::NEG_INFINITY];
            for (i, m) in b.iter().enumerate() {
                let asym = (m - m.transpose()).abs().max();
                if asym > 1e-12 {
                    violations.push(Violation::new(i, ViolationKind::BNotSymmetric, asym, 0.0));
                }
                let e = (Matrix3::identity() - m).symmetric_eigenvalues();
                let (lo, hi) = (e.min(), e.max());
                ib_range[0] = f64::min(ib_range[0], lo);
                ib_range[1] = f64::max(ib_range[1], hi);
                if lo < 1.0 / ap.cal_e {
                    violations.push(Violation::new(i, ViolationKind::IMinusBEllipticity, lo, 1.0 / ap.cal_e));
                } else if hi > ap.cal_e {
                    violations.push(Violation::new(i, ViolationKind::IMinusBEllipticity, hi, ap.cal_e));
                }
            }
        }

        let w1p = W1pEstimates {
            mu_a: sobolev_w1p(&self.grid, ap.p, |i| self.mu_a[i], |i| {
                fd::gradient(&self.grid, i, |j| self.mu_a[j])
            }),
            mu_s: sobolev_w1p(&self.grid, ap.p, |i| self.mu_s[i], |i| {
                fd::gradient(&self.grid, i, |j| self.mu_s[j])
            }),
            b: self.b.as_ref().map(|b| {
                sobolev_w1p(&self.grid, ap.p, |i| b[i].norm(), |i| {
                    let g = fd::gradient(&self.grid, i, |j| b[j]);
                    [g[0].norm(), g[1].norm(), g[2].norm()]
                })
            }),
            approximate: true,
        };
        let w1p_exceeded = w1p.mu_a > ap.sobolev_bound
            || w1p.mu_s > ap.sobolev_bound
            || w1p.b.is_some_and(|b| b > ap.sobolev_bound);

        let k_ranges = ap.k_ranges().ok();
        AdmissibilityReport {
            admissible: violations.is_empty(),
            violations,
            mu_a_range,
            mu_s_range,
            i_minus_b_eigen_range: ib_range,
            w1p,
            w1p_exceeded,
            b_support_interior: self.b_support_interior(),
            k_admissible: k_ranges.map(|r| r.is_admissible(ap.k)),
            k_ranges,
        }
    }
}

/// Discrete `(sum_nodes w (|f|^p + |grad f|^p))^{1/p}`.
fn sobolev_w1p(
    grid: &GridDomain,
    p: f64,
    value: impl Fn(usize) -> f64,
    grad: impl Fn(usize) -> [f64; 3],
) -> f64 {
    (0..grid.len())
        .map(|i| {
            let g = grad(i);
            let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            grid.volume_weight(i) * (value(i).abs().powf(p) + gn.powf(p))
        })
        .sum::<f64>()
        .powf(1.0 / p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MuAOutOfRange,
    MuSOutOfRange,
    BNotSymmetric,
    IMinusBEllipticity,
    /// `min eig K_R` below the closed-form lower bound stated in terms of
    /// `lambda (1 + calE)`; that bound is only valid for
    /// `k^2 <= (1 + calE)(1 + 1/calE)`.
    KrBelowStatedBound,
    /// `min eig K_R` below the sharp lower bound over the admissible range.
    KrBelowSharpBound,
    KiBelowBound,
    NormBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub node: usize,
    pub kind: ViolationKind,
    pub value: f64,
    pub bound: f64,
}

impl Violation {
    fn new(node: usize, kind: ViolationKind, value: f64, bound: f64) -> Self {
        Self {
            node,
            kind,
            value,
            bound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W1pEstimates {
    pub mu_a: f64,
    pub mu_s: f64,
    pub b: Option<f64>,
    /// Always true: grid quadrature of finite-difference gradients.
    pub approximate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub violations: Vec<Violation>,
    pub mu_a_range: [f64; 2],
    pub mu_s_range: [f64; 2],
    pub i_minus_b_eigen_range: [f64; 2],
    pub w1p: W1pEstimates,
    pub w1p_exceeded: bool,
    pub b_support_interior: bool,
    pub k_ranges: Option<KRanges>,
    pub k_admissible: Option<bool>,
}

/// Pointwise complex tensor `K`, its split and the reaction coefficient
/// `q = q_R + i q_I = mu_a - ik`.
#[derive(Debug, Clone)]
pub struct ComplexTensorField {
    pub grid: GridDomain,
    pub wave_number: f64,
    /// `K` by direct complex inversion.
    pub k: Vec<Matrix3<C64>>,
    /// `K_R`, `K_I` by the closed forms.
    pub k_r: Vec<Matrix3<f64>>,
    pub k_i: Vec<Matrix3<f64>>,
    pub q_r: Vec<f64>,
    pub q_i: Vec<f64>,
}

impl ComplexTensorField {
    /// Largest entrywise `|K - (K_R + i K_I)|`.
    pub fn reassembly_deviation(&self) -> f64 {
        self.k
            .iter()
            .zip(self.k_r.iter().zip(&self.k_i))
            .map(|(k, (r, i))| {
                k.iter()
                    .zip(r.iter().zip(i.iter()))
                    .map(|(kv, (rv, iv))| (kv - C64::new(*rv, *iv)).norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Largest entrywise `|n (K^{-1})_R - K^{-1}_R|`-type deviation between the
    /// inverse of the stored `K` and the closed form `K^{-1}`.
    pub fn inverse_deviation(&self, medium: &OpticalMedium) -> f64 {
        self.k
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let inv = k.try_inverse().unwrap_or_else(Matrix3::zeros);
                let exact = medium.tensor_inverse_at_point(i);
                let scale = exact.iter().map(|v| v.norm()).fold(0.0, f64::max);
                (0..3)
                    .flat_map(|r| (0..3).map(move |c| (r, c)))
                    .map(|(r, c)| (inv[(r, c)] - exact[(r, c)]).norm() / scale)
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Build `K`, `K_R`, `K_I` and `q` at every node.
pub fn split_real_imag(medium: &OpticalMedium) -> Result<ComplexTensorField> {
    let k = medium.k();
    let len = medium.grid.len();
    let mut out = ComplexTensorField {
        grid: medium.grid,
        wave_number: k,
        k: Vec::with_capacity(len),
        k_r: Vec::with_capacity(len),
        k_i: Vec::with_capacity(len),
        q_r: medium.mu_a.clone(),
        q_i: vec![-k; len],
    };
    for i in 0..len {
        out.k.push(medium.tensor_at(i)?);
        let b = to_dmatrix(&medium.b_at(i));
        let s = split_pointwise(medium.mu_a[i], medium.mu_s[i], &b, k)?;
        out.k_r.push(to_matrix3(&s.k_r));
        out.k_i.push(to_matrix3(&s.k_i));
    }
    Ok(out)
}

/// Closed-form bounds used by [`verify_ellipticity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityBounds {
    /// `lambda (1+calE) / n * (lambda^2 (1+calE)^2 + k^2)^{-1}`.
    pub kr_lower_stated: f64,
    /// `min over a in [lambda^{-1}(1+1/calE), lambda(1+calE)]` of `a / (n (a^2 + k^2))`.
    pub kr_lower_sharp: f64,
    /// `k / n * (lambda^2 (1+calE)^2 + k^2)^{-1}`.
    pub ki_lower: f64,
    /// Bound on `|K_R|^2 + |K_I|^2` (spectral norms).
    pub norm_upper: f64,
}

impl EllipticityBounds {
    pub fn from_apriori(ap: &AprioriData) -> Self {
        let n = ap.n as f64;
        let k2 = ap.k * ap.k;
        let hi = ap.lambda * (1.0 + ap.cal_e);
        let lo = (1.0 + 1.0 / ap.cal_e) / ap.lambda;
        let f = |a: f64| a / (n * (a * a + k2));
        Self {
            kr_lower_stated: hi / n / (hi * hi + k2),
            kr_lower_sharp: f(lo).min(f(hi)),
            ki_lower: ap.k / n / (hi * hi + k2),
            norm_upper: (hi * hi + k2) / (n * n) / (lo * lo + k2).powi(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEllipticity {
    pub min_eig_kr: f64,
    pub max_eig_kr: f64,
    pub min_eig_ki: f64,
    /// `|K_R|^2 + |K_I|^2` with spectral norms.
    pub norm_sq: f64,
    /// Two-sided constant of `C xi . xi` at this point.
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub bounds: EllipticityBounds,
    pub points: Vec<PointEllipticity>,
    pub violations: Vec<Violation>,
    /// Global strong-ellipticity constant of the block matrix `C`.
    pub c2: f64,
}

impl EllipticityReport {
    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

fn spectral_norm_sym(m: &Matrix3<f64>) -> f64 {
    m.symmetric_eigenvalues().iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Pointwise eigenvalue checks of `K_R`, `K_I` against the closed-form bounds.
/// Violations are recorded, never raised.
pub fn verify_ellipticity(field: &ComplexTensorField, apriori: &AprioriData) -> EllipticityReport {
    let bounds = EllipticityBounds::from_apriori(apriori);
    let rel = 1e-12;
    let mut violations = Vec::new();
    let mut points = Vec::with_capacity(field.k.len());
    let mut c2 = 0.0f64;
    for i in 0..field.k.len() {
        let er = field.k_r[i].symmetric_eigenvalues();
        let ei = field.k_i[i].symmetric_eigenvalues();
        let (min_r, max_r) = (er.min(), er.max());
        let min_i = ei.min();
        let norm_sq = spectral_norm_sym(&field.k_r[i]).powi(2) + spectral_norm_sym(&field.k_i[i]).powi(2);
        let pc2 = if min_r > 0.0 { (1.0 / min_r).max(max_r) } else { f64::INFINITY };
        c2 = c2.max(pc2);
        let mu_a = field.q_r[i];
        if mu_a < 1.0 / apriori.lambda || mu_a > apriori.lambda {
            let b = if mu_a < 1.0 / apriori.lambda { 1.0 / apriori.lambda } else { apriori.lambda };
            violations.push(Violation::new(i, ViolationKind::MuAOutOfRange, mu_a, b));
        }
        if min_r < bounds.kr_lower_stated * (1.0 - rel) {
            violations.push(Violation::new(i, ViolationKind::KrBelowStatedBound, min_r, bounds.kr_lower_stated));
        }
        if min_r < bounds.kr_lower_sharp * (1.0 - rel) {
            violations.push(Violation::new(i, ViolationKind::KrBelowSharpBound, min_r, bounds.kr_lower_sharp));
        }
        if min_i < bounds.ki_lower * (1.0 - rel) {
            violations.push(Violation::new(i, ViolationKind::KiBelowBound, min_i, bounds.ki_lower));
        }
        if norm_sq > bounds.norm_upper * (1.0 + rel) {
            violations.push(Violation::new(i, ViolationKind::NormBound, norm_sq, bounds.norm_upper));
        }
        points.push(PointEllipticity {
            min_eig_kr: min_r,
            max_eig_kr: max_r,
            min_eig_ki: min_i,
            norm_sq,
            c2: pc2,
        });
    }
    EllipticityReport {
        bounds,
        points,
        violations,
        c2,
    }
}

/// Block matrix `C` at every node.
pub fn assemble_block_c(field: &ComplexTensorField) -> Vec<SMatrix<f64, 6, 6>> {
    field
        .k_r
        .iter()
        .zip(&field.k_i)
        .map(|(r, i)| {
            let mut c = SMatrix::<f64, 6, 6>::zeros();
            c.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
            c.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
            c.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-i));
            c.fixed_view_mut::<3, 3>(3, 0).copy_from(i);
            c
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn apriori() -> AprioriData {
        AprioriData {
            n: 3,
            p: 6.0,
            lambda: 1.0,
            sobolev_bound: 100.0,
            cal_e: 1.0,
            k: 1.0,
            r0: 0.5,
            lipschitz: 1.0,
            diam: 3f64.sqrt(),
            alpha: 0.25,
        }
    }

    fn zeros(n: usize) -> DMatrix<f64> {
        DMatrix::zeros(n, n)
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn k_ranges_closed_form() {
        // tan(pi/6) = 1/sqrt(3): k0 = sqrt(3) (sqrt(16/3) - 2), k~0 = 2 sqrt(3)(1 + 2/sqrt(3))
        let r = k_admissible_ranges(1.0, 1.0, 3).unwrap();
        let s3 = 3f64.sqrt();
        assert!((r.k0 - s3 * ((16.0f64 / 3.0).sqrt() - 2.0)).abs() < 1e-14);
        assert!((r.k0 - 0.535898384862245).abs() < 1e-12);
        assert!((r.k0_tilde - 7.464101615137754).abs() < 1e-12);
        let r4 = k_admissible_ranges(1.0, 1.0, 4).unwrap();
        assert!((r4.k0 - 0.397825).abs() < 1e-5, "{}", r4.k0);
        assert!((r4.k0_tilde - 10.05467).abs() < 1e-5, "{}", r4.k0_tilde);
        assert!(r.is_admissible(r.k0));
        assert!(!r.is_admissible(1.0));
        assert!(r.is_admissible(r.k0_tilde));
        assert!(!r.is_admissible(0.0));
        assert!(k_admissible_ranges(1.0, 1.0, 2).is_err());
    }

    #[test]
    fn isotropic_tensor_values() {
        let k = diffusion_tensor(1.0, 1.0, &zeros(3), 1.0).unwrap();
        let expect = C64::new(2.0, 1.0) / 15.0;
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { expect } else { C64::new(0.0, 0.0) };
                assert!(close(k[(i, j)], e, 1e-15));
            }
        }
        let k0 = diffusion_tensor(1.0, 1.0, &zeros(3), 0.0).unwrap();
        assert!(close(k0[(1, 1)], C64::new(1.0 / 6.0, 0.0), 1e-15));
        let mut b = zeros(3);
        b[(0, 0)] = 0.5;
        let ka = diffusion_tensor(1.0, 2.0, &b, 0.0).unwrap();
        assert!(close(ka[(0, 0)], C64::new(1.0 / 6.0, 0.0), 1e-15));
        assert!(close(ka[(1, 1)], C64::new(1.0 / 9.0, 0.0), 1e-15));
        assert!(close(ka[(2, 2)], C64::new(1.0 / 9.0, 0.0), 1e-15));
    }

    #[test]
    fn split_matches_direct_and_large_k_structure() {
        let s = split_pointwise(1.0, 1.0, &zeros(3), 1.0).unwrap();
        assert!((s.k_r[(0, 0)] - 2.0 / 15.0).abs() < 1e-15);
        assert!((s.k_i[(2, 2)] - 1.0 / 15.0).abs() < 1e-15);
        let mut b = zeros(3);
        b[(0, 1)] = 0.2;
        b[(1, 0)] = 0.2;
        b[(2, 2)] = -0.3;
        let k = 40.0;
        let s = split_pointwise(0.7, 1.3, &b, k).unwrap();
        let direct = diffusion_tensor(0.7, 1.3, &b, k).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((direct[(i, j)].re - s.k_r[(i, j)]).abs() < 1e-15);
                assert!((direct[(i, j)].im - s.k_i[(i, j)]).abs() < 1e-15);
            }
        }
        // K_I n / k = (A^2 + k^2 I)^{-1}
        let a = DMatrix::identity(3, 3) * 2.0 - &b * 1.3;
        let target = (&a * &a + DMatrix::identity(3, 3) * (k * k)).try_inverse().unwrap();
        let scaled = &s.k_i * (3.0 / k);
        assert!((scaled - target).abs().max() < 1e-16);
    }

    #[test]
    fn sensitivity_values() {
        let d = diffusion_tensor_sensitivity(1.0, 1.0, &zeros(3), 1.0).unwrap();
        // -3 ((2+i)/15)^2 = -3 (3+4i)/225
        let e = C64::new(3.0, 4.0) * (-3.0 / 225.0);
        assert!(close(d[(0, 0)], e, 1e-15));
        let d0 = diffusion_tensor_sensitivity(1.0, 1.0, &zeros(3), 0.0).unwrap();
        assert!(close(d0[(2, 2)], C64::new(-3.0 / 36.0, 0.0), 1e-15));
        assert!(d0[(0, 1)].norm() == 0.0);
    }

    #[test]
    fn sensitivity_against_central_difference() {
        let mut b = zeros(3);
        b[(0, 2)] = 0.1;
        b[(2, 0)] = 0.1;
        let (mu_a, mu_s, k, d) = (0.9, 1.1, 0.6, 1e-5);
        let plus = diffusion_tensor(mu_a + d, mu_s, &b, k).unwrap();
        let minus = diffusion_tensor(mu_a - d, mu_s, &b, k).unwrap();
        let fd = (plus - minus) / C64::new(2.0 * d, 0.0);
        let exact = diffusion_tensor_sensitivity(mu_a, mu_s, &b, k).unwrap();
        let err = (&fd - &exact).iter().map(|v| v.norm()).fold(0.0, f64::max);
        let scale = exact.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(err / scale < 1e-8, "{}", err / scale);
    }

    #[test]
    fn q_matrix_form() {
        let q = q_matrix(1.0, 1.0);
        assert_eq!(q, Matrix2::new(1.0, 1.0, -1.0, 1.0));
        let xi = nalgebra::Vector2::new(1.0, 0.0);
        assert_eq!((q * xi).dot(&xi), 1.0);
        let q = q_matrix(0.5, 7.0);
        let sym = (q + q.transpose()) * 0.5;
        assert!((sym.symmetric_eigenvalues().min() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn block_c_quadratic_form() {
        let s = split_pointwise(1.0, 1.0, &zeros(3), 1.0).unwrap();
        let c = block_c(&s.k_r, &s.k_i);
        assert_eq!(c.nrows(), 6);
        assert!((c[(0, 0)] - 2.0 / 15.0).abs() < 1e-15);
        assert!((c[(0, 3)] + 1.0 / 15.0).abs() < 1e-15);
        assert!((c[(3, 0)] - 1.0 / 15.0).abs() < 1e-15);
        let e1 = nalgebra::DVector::from_fn(6, |i, _| if i == 0 { 1.0 } else { 0.0 });
        assert!(((&c * &e1).dot(&e1) - s.k_r[(0, 0)]).abs() < 1e-16);
    }

    #[test]
    fn ellipticity_equality_case_and_violation() {
        let grid = GridDomain::new(1.0, 9).unwrap();
        let ap = apriori();
        let mut med = OpticalMedium::homogeneous(grid, ap, 1.0, 1.0).unwrap();
        let field = split_real_imag(&med).unwrap();
        let rep = verify_ellipticity(&field, &ap);
        assert!(rep.violations.is_empty(), "{:?}", &rep.violations[..1]);
        assert!((rep.points[0].min_eig_kr - 2.0 / 15.0).abs() < 1e-15);
        assert!((rep.bounds.kr_lower_stated - 2.0 / 15.0).abs() < 1e-15);
        assert!(field.reassembly_deviation() <= 1e-14);

        med.mu_a[42] = 0.5;
        let rep = verify_ellipticity(&split_real_imag(&med).unwrap(), &ap);
        assert!(rep.violations.iter().any(|v| v.node == 42 && v.kind == ViolationKind::MuAOutOfRange));
        assert!(!med.admissibility().admissible);
    }
}
