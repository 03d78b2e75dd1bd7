//! Gegenbauer (ultraspherical) polynomials `C_m^{(n-2)/2}` of complex argument.
//!
//! The order is always `(n-2)/2` for a space dimension `3 <= n <= 16`, so it is
//! stored as the integer `n - 2` and every Gamma ratio that appears in the
//! explicit sum is a rising factorial of a half-integer, which is computed in
//! exact rational arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::{Error, Result, C64};

/// Highest supported degree.
pub const MAX_DEGREE: u32 = 64;
/// Highest supported space dimension.
pub const MAX_DIMENSION: u32 = 16;

/// Degree `m` and order `(n-2)/2` of a Gegenbauer polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GegenbauerSpec {
    degree: u32,
    /// `2 * order = n - 2`.
    twice_order: u32,
}

impl GegenbauerSpec {
    /// Polynomial `C_m^{(n-2)/2}` for space dimension `n`.
    pub fn new(degree: u32, dimension: u32) -> Result<Self> {
        if !(3..=MAX_DIMENSION).contains(&dimension) {
            return Err(Error::domain(format!(
                "dimension must lie in 3..={MAX_DIMENSION}, got {dimension}"
            )));
        }
        Self::with_twice_order(degree, dimension - 2)
    }

    fn with_twice_order(degree: u32, twice_order: u32) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::domain(format!(
                "degree {degree} above the supported cap {MAX_DEGREE}"
            )));
        }
        Ok(Self {
            degree,
            twice_order,
        })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// The space dimension `n` this order corresponds to.
    pub fn dimension(&self) -> u32 {
        self.twice_order + 2
    }

    pub fn order(&self) -> f64 {
        self.twice_order as f64 / 2.0
    }

    /// Evaluate by the three-term recurrence
    /// `m C_m = 2z (m + a - 1) C_{m-1} - (m + 2a - 2) C_{m-2}`.
    pub fn eval(&self, z: C64) -> C64 {
        let a = self.order();
        let mut prev = C64::new(1.0, 0.0);
        if self.degree == 0 {
            return prev;
        }
        let mut cur = z * (2.0 * a);
        for m in 2..=self.degree {
            let mf = m as f64;
            let next = (z * (2.0 * (mf + a - 1.0)) * cur - prev * (mf + 2.0 * a - 2.0)) / mf;
            prev = cur;
            cur = next;
        }
        cur
    }

    pub fn eval_real(&self, t: f64) -> f64 {
        self.eval(C64::new(t, 0.0)).re
    }

    /// Exact coefficients of `z^(m-2j)`, `j = 0..=m/2`, of the explicit sum
    /// `sum_j (-1)^j Gamma(m-j+a) / (Gamma(a) j! (m-2j)!) (2z)^(m-2j)`.
    pub fn coefficients_exact(&self) -> Vec<BigRational> {
        let m = self.degree as i64;
        let half = BigRational::new(BigInt::from(self.twice_order), BigInt::from(2));
        (0..=m / 2)
            .map(|j| {
                // Gamma(m-j+a)/Gamma(a) = (a)_{m-j}
                let mut c = BigRational::one();
                for i in 0..(m - j) {
                    c *= &half + BigRational::from_integer(BigInt::from(i));
                }
                c /= BigRational::from_integer(factorial(j as u32));
                c /= BigRational::from_integer(factorial((m - 2 * j) as u32));
                c *= BigRational::from_integer(BigInt::from(2).pow((m - 2 * j) as u32));
                if j % 2 == 1 {
                    c = -c;
                }
                c
            })
            .collect()
    }

    /// Coefficients of `z^(m-2j)` rounded to `f64`.
    pub fn coefficients(&self) -> Vec<f64> {
        self.coefficients_exact()
            .iter()
            .map(|c| c.to_f64().unwrap_or(f64::NAN))
            .collect()
    }

    /// Evaluate the explicit finite sum directly. Used as an independent check
    /// on [`GegenbauerSpec::eval`].
    pub fn eval_sum(&self, z: C64) -> C64 {
        let m = self.degree as i32;
        self.coefficients()
            .into_iter()
            .enumerate()
            .map(|(j, c)| z.powi(m - 2 * j as i32) * c)
            .sum()
    }

    /// `d/dz C_m^a = 2a C_{m-1}^{a+1}`.
    pub fn derivative(&self, z: C64) -> C64 {
        if self.degree == 0 {
            return C64::new(0.0, 0.0);
        }
        let lowered = Self {
            degree: self.degree - 1,
            twice_order: self.twice_order + 2,
        };
        lowered.eval(z) * self.order() * 2.0
    }

    /// `d^2/dz^2 C_m^a = 4a(a+1) C_{m-2}^{a+2}`.
    pub fn second_derivative(&self, z: C64) -> C64 {
        if self.degree < 2 {
            return C64::new(0.0, 0.0);
        }
        let a = self.order();
        let lowered = Self {
            degree: self.degree - 2,
            twice_order: self.twice_order + 4,
        };
        lowered.eval(z) * (4.0 * a * (a + 1.0))
    }

    /// Residuals of two candidate ODEs at real `t`, see [`OdeResidual`].
    pub fn ode_residual(&self, t: f64) -> OdeResidual {
        let n = self.dimension() as f64;
        let m = self.degree as f64;
        let z = C64::new(t, 0.0);
        let y = self.eval(z).re;
        let dy = self.derivative(z).re;
        let d2y = self.second_derivative(z).re;
        let lam = m * (m + n - 2.0);
        let standard = (1.0 - t * t) * d2y - (n - 1.0) * t * dy + lam * y;
        let alternative = (t * t - 1.0) * d2y + 2.0 * t * (n - 1.0) * dy - lam * y;
        let scale = (1.0 - t * t).abs() * d2y.abs() + (n - 1.0) * (t * dy).abs() + (lam * y).abs();
        let alt_scale =
            (1.0 - t * t).abs() * d2y.abs() + 2.0 * (n - 1.0) * (t * dy).abs() + (lam * y).abs();
        let rel = |r: f64, s: f64| if s > 0.0 { r.abs() / s } else { r.abs() };
        OdeResidual {
            standard,
            alternative,
            standard_relative: rel(standard, scale),
            alternative_relative: rel(alternative, alt_scale),
        }
    }

    /// Closed-form endpoint values `C(1) = Gamma(m+n-2)/(m! Gamma(n-2))` and
    /// `C(-1) = (-1)^m C(1)`, checked to be nonzero.
    pub fn endpoint_values(&self) -> Result<EndpointValues> {
        let plus = if self.twice_order == 0 {
            // Chebyshev-type limit is excluded by n >= 3; kept for completeness.
            if self.degree == 0 { 1.0 } else { 0.0 }
        } else {
            // (2a)_m / m! = binom(m + n - 3, m)
            binomial(self.degree + self.twice_order - 1, self.degree)
                .to_f64()
                .unwrap_or(f64::INFINITY)
        };
        let minus = if self.degree % 2 == 0 { plus } else { -plus };
        if plus == 0.0 {
            return Err(Error::domain("Gegenbauer polynomial vanishes at t = 1"));
        }
        Ok(EndpointValues { plus, minus })
    }
}

/// Residuals of the standard Gegenbauer ODE
/// `(1-t^2) y'' - (n-1) t y' + m(m+n-2) y = 0`
/// and of the alternative form `(t^2-1) y'' + 2t(n-1) y' - m(m+n-2) y = 0`,
/// each also normalised by the sum of the magnitudes of its terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeResidual {
    pub standard: f64,
    pub alternative: f64,
    pub standard_relative: f64,
    pub alternative_relative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointValues {
    /// `C_m(1)`
    pub plus: f64,
    /// `C_m(-1)`
    pub minus: f64,
}

fn factorial(k: u32) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

fn binomial(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn low_degree_values() {
        let g0 = GegenbauerSpec::new(0, 5).unwrap();
        assert_eq!(g0.eval(c(0.3, -2.0)), c(1.0, 0.0));
        let g1 = GegenbauerSpec::new(1, 3).unwrap();
        assert!((g1.eval(c(0.3, 0.4)) - c(0.3, 0.4)).norm() < 1e-15);
        let g2 = GegenbauerSpec::new(2, 3).unwrap();
        assert!((g2.eval(c(1.0, 0.0)) - c(1.0, 0.0)).norm() < 1e-15);
        assert!((g2.eval(c(0.0, 1.0)) - c(-2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn derivatives_by_hand() {
        let g1 = GegenbauerSpec::new(1, 3).unwrap();
        assert!((g1.derivative(c(0.7, -0.2)) - c(1.0, 0.0)).norm() < 1e-15);
        let g2 = GegenbauerSpec::new(2, 3).unwrap();
        assert!((g2.derivative(c(0.5, 0.0)) - c(1.5, 0.0)).norm() < 1e-15);
        assert_eq!(GegenbauerSpec::new(0, 4).unwrap().derivative(c(0.1, 0.0)), c(0.0, 0.0));
    }

    #[test]
    fn exact_coefficients_n3_m2() {
        // (3 z^2 - 1) / 2
        let g = GegenbauerSpec::new(2, 3).unwrap();
        assert_eq!(g.coefficients(), vec![1.5, -0.5]);
    }

    #[test]
    fn endpoint_closed_form() {
        let e = GegenbauerSpec::new(2, 3).unwrap().endpoint_values().unwrap();
        assert_eq!(e.plus, 1.0);
        let e = GegenbauerSpec::new(3, 4).unwrap().endpoint_values().unwrap();
        assert_eq!(e.plus, 4.0);
        assert_eq!(e.minus, -4.0);
    }

    #[test]
    fn ode_residual_degree_one() {
        let r = GegenbauerSpec::new(1, 3).unwrap().ode_residual(0.5);
        assert!(r.standard.abs() <= 1e-12);
        // y = t: alternative form gives 2t(n-1) - m(m+n-2) t = 4t - 2t = 2t != 0
        assert!((r.alternative - 1.0).abs() < 1e-12);
        let r0 = GegenbauerSpec::new(0, 5).unwrap().ode_residual(-0.3);
        assert_eq!(r0.standard, 0.0);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(GegenbauerSpec::new(2, 2).is_err());
        assert!(GegenbauerSpec::new(2, 17).is_err());
        assert!(GegenbauerSpec::new(65, 3).is_err());
    }
}
