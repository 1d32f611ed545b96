//! Truncated formal Laurent series in one variable.

use std::ops::{Add, Mul, Neg, Sub};

use crate::C64;

/// Coefficients `c_k` for `k_min <= k <= order`; everything above `order`
/// is unknown and dropped by arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentSeries {
    k_min: i64,
    order: i64,
    coeffs: Vec<C64>,
}

impl LaurentSeries {
    pub fn zero(order: i64) -> Self {
        Self { k_min: 0, order, coeffs: vec![C64::new(0.0, 0.0); (order + 1).max(0) as usize] }
    }

    pub fn one(order: i64) -> Self {
        Self::monomial(C64::new(1.0, 0.0), 0, order)
    }

    pub fn monomial(c: C64, k: i64, order: i64) -> Self {
        let mut s = Self::from_coeffs(k.min(order + 1), vec![], order);
        if k <= order {
            s.coeffs = vec![C64::new(0.0, 0.0); (order - k + 1) as usize];
            s.coeffs[0] = c;
        }
        s
    }

    /// Series with `coeffs[i]` the coefficient of `w^(k_min + i)`, cut at `order`.
    pub fn from_coeffs(k_min: i64, mut coeffs: Vec<C64>, order: i64) -> Self {
        let len = (order - k_min + 1).max(0) as usize;
        coeffs.resize(len, C64::new(0.0, 0.0));
        Self { k_min, order, coeffs }
    }

    /// Power series `Σ_{m=1}^{order} f(m) w^m`.
    pub fn from_fn(order: i64, f: impl Fn(i64) -> C64) -> Self {
        let mut c = vec![C64::new(0.0, 0.0)];
        c.extend((1..=order).map(f));
        Self::from_coeffs(0, c, order)
    }

    pub fn k_min(&self) -> i64 {
        self.k_min
    }

    pub fn order(&self) -> i64 {
        self.order
    }

    pub fn coeff(&self, k: i64) -> C64 {
        if k < self.k_min || k > self.order {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[(k - self.k_min) as usize]
        }
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Drop every term above `order`.
    pub fn truncate(&self, order: i64) -> Self {
        let order = order.min(self.order);
        let keep = (order - self.k_min + 1).max(0) as usize;
        Self::from_coeffs(self.k_min, self.coeffs[..keep.min(self.coeffs.len())].to_vec(), order)
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|a| a * c).collect(), ..self.clone() }
    }

    /// Multiply by `w^k`.
    pub fn shift(&self, k: i64) -> Self {
        Self { k_min: self.k_min + k, order: self.order + k, coeffs: self.coeffs.clone() }
    }

    /// Lowest order at which the constant-term-normalised series is known.
    fn valuation_is_nonnegative(&self) -> bool {
        (self.k_min..0).all(|k| self.coeff(k) == C64::new(0.0, 0.0))
    }

    /// `exp` of a power series (no negative powers).
    pub fn exp(&self) -> Self {
        assert!(self.valuation_is_nonnegative(), "exp needs a power series");
        let n = self.order.max(0) as usize;
        let g: Vec<C64> = (0..=n as i64).map(|k| self.coeff(k)).collect();
        let mut f = vec![C64::new(0.0, 0.0); n + 1];
        f[0] = C64::new(1.0, 0.0);
        for k in 1..=n {
            let mut s = C64::new(0.0, 0.0);
            for j in 1..=k {
                s += g[j] * f[k - j] * j as f64;
            }
            f[k] = s / k as f64;
        }
        Self::from_coeffs(0, f, self.order).scale(g[0].exp())
    }

    /// `log` of a power series with nonzero constant term.
    pub fn log(&self) -> Self {
        assert!(self.valuation_is_nonnegative(), "log needs a power series");
        let n = self.order.max(0) as usize;
        let c0 = self.coeff(0);
        assert!(c0.norm() > 0.0, "log needs a nonzero constant term");
        let f: Vec<C64> = (0..=n as i64).map(|k| self.coeff(k) / c0).collect();
        let mut g = vec![C64::new(0.0, 0.0); n + 1];
        g[0] = c0.ln();
        for k in 1..=n {
            let mut s = f[k] * k as f64;
            for j in 1..k {
                s -= g[j] * f[k - j] * j as f64;
            }
            g[k] = s / k as f64;
        }
        Self::from_coeffs(0, g, self.order)
    }

    /// Largest coefficient difference over the common known range.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let lo = self.k_min.min(other.k_min);
        let hi = self.order.min(other.order);
        (lo..=hi).map(|k| (self.coeff(k) - other.coeff(k)).norm()).fold(0.0, f64::max)
    }

    /// As [`max_abs_diff`](Self::max_abs_diff), each difference divided by
    /// `max(1, |other_k|)`.
    pub fn max_rel_diff(&self, other: &Self) -> f64 {
        let lo = self.k_min.min(other.k_min);
        let hi = self.order.min(other.order);
        (lo..=hi)
            .map(|k| (self.coeff(k) - other.coeff(k)).norm() / other.coeff(k).norm().max(1.0))
            .fold(0.0, f64::max)
    }

    /// Evaluate the truncated sum at `w`.
    pub fn eval(&self, w: C64) -> C64 {
        (self.k_min..=self.order).map(|k| self.coeff(k) * w.powi(k as i32)).sum()
    }
}

impl Add for &LaurentSeries {
    type Output = LaurentSeries;
    fn add(self, o: &LaurentSeries) -> LaurentSeries {
        let k_min = self.k_min.min(o.k_min);
        let order = self.order.min(o.order);
        let c = (k_min..=order).map(|k| self.coeff(k) + o.coeff(k)).collect();
        LaurentSeries::from_coeffs(k_min, c, order)
    }
}

impl Neg for &LaurentSeries {
    type Output = LaurentSeries;
    fn neg(self) -> LaurentSeries {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Sub for &LaurentSeries {
    type Output = LaurentSeries;
    fn sub(self, o: &LaurentSeries) -> LaurentSeries {
        self + &(-o)
    }
}

impl Mul for &LaurentSeries {
    type Output = LaurentSeries;
    fn mul(self, o: &LaurentSeries) -> LaurentSeries {
        let k_min = self.k_min + o.k_min;
        let order = (self.order + o.k_min).min(o.order + self.k_min);
        let len = (order - k_min + 1).max(0) as usize;
        let mut c = vec![C64::new(0.0, 0.0); len];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                if i + j < len {
                    c[i + j] += a * b;
                }
            }
        }
        LaurentSeries::from_coeffs(k_min, c, order)
    }
}
