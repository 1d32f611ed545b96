//! Multi-nome infinite products, theta functions and the bracket families
//! `[v]`, `{v}`, `⟦v⟧`, `⦃v⦄` at levels r, r−1 and 1.
//!
//! Complex powers of negative quantities use one fixed branch everywhere:
//! `(−z)^α = exp(α(Log z + iπ))` with principal `Log`, and
//! `(−1)^r = exp(iπr)`.

use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// Factors of a product closer to zero than this are treated as poles when
/// they sit in a denominator.
pub const POLE_TOL: f64 = 1e-12;

/// The global parameter triple `(n, r, x)`; `x = e^{−ε}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticParams {
    pub n: usize,
    pub r: f64,
    pub x: f64,
}

impl EllipticParams {
    pub fn new(n: usize, r: f64, x: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams(format!("n = {n} < 2")));
        }
        if !(r > 1.0) || !r.is_finite() {
            return Err(Error::InvalidParams(format!("r = {r} must exceed 1")));
        }
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::InvalidParams(format!("x = {x} must lie in (0,1)")));
        }
        Ok(Self { n, r, x })
    }

    pub fn eps(&self) -> f64 {
        -self.x.ln()
    }

    /// Real level carried by a [`Level`].
    pub fn level(&self, level: Level) -> f64 {
        match level {
            Level::R => self.r,
            Level::RMinus1 => self.r - 1.0,
            Level::One => 1.0,
        }
    }
}

/// Truncation control for infinite products and sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    pub tail_tol: f64,
    pub max_terms: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { tail_tol: 1e-16, max_terms: 4096 }
    }
}

impl TruncationPolicy {
    pub fn new(tail_tol: f64, max_terms: usize) -> Result<Self> {
        if !(tail_tol > 0.0) || max_terms == 0 {
            return Err(Error::InvalidParams("tail_tol > 0 and max_terms >= 1 required".into()));
        }
        Ok(Self { tail_tol, max_terms })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BracketFamily {
    /// `[v] = x^{v²/r−v} Θ_{x^{2r}}(x^{2v})`
    Square,
    /// `{v} = x^{v²/r−v} Θ_{x^{2r}}(−x^{2v})`
    Brace,
    /// `⟦v⟧ = x^{v²/r} Θ_{x^{2r}}(x^{2v+r})`
    DblSquare,
    /// `⦃v⦄ = x^{v²/r} Θ_{x^{2r}}(−x^{2v+r})`
    DblBrace,
}

/// Which coupling replaces `r`: plain, primed (`r−1`) or subscript 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    R,
    RMinus1,
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BracketSpec {
    pub family: BracketFamily,
    pub level: Level,
}

impl BracketSpec {
    pub const fn new(family: BracketFamily, level: Level) -> Self {
        Self { family, level }
    }
}

/// `x^a` for complex exponent.
#[inline]
pub fn xpow(x: f64, a: C64) -> C64 {
    (a * x.ln()).exp()
}

/// `x^a` for real exponent.
#[inline]
pub fn xpowf(x: f64, a: f64) -> f64 {
    x.powf(a)
}

/// Branch used by [`neg_pow`], as recorded in output metadata.
pub const NEG_POW_BRANCH: &str = "(-z)^a = exp(a(Log z + i*pi))";

/// `(−z)^α` on the fixed branch `exp(α(Log z + iπ))`.
#[inline]
pub fn neg_pow(z: C64, alpha: f64) -> C64 {
    (alpha * (z.ln() + C64::new(0.0, PI))).exp()
}

/// `((−1)^r z)^α` with `(−1)^r = exp(iπr)`.
#[inline]
pub fn sign_r_pow(z: C64, r: f64, alpha: f64) -> C64 {
    (alpha * (z.ln() + C64::new(0.0, PI * r))).exp()
}

/// Principal power `z^α = exp(α Log z)`.
#[inline]
pub fn cpow(z: C64, alpha: f64) -> C64 {
    (alpha * z.ln()).exp()
}

fn check_nomes(nomes: &[C64]) -> Result<()> {
    for q in nomes {
        if q.norm() >= 1.0 {
            return Err(Error::NomeOutOfRange(q.norm()));
        }
    }
    Ok(())
}

/// Running product. Factors within `SMALL` of 1 go into a log-sum so that
/// thousands of near-unit factors do not accumulate multiplication rounding.
struct Acc {
    prod: C64,
    log: C64,
    min: f64,
}

const SMALL: f64 = 1e-6;

impl Acc {
    fn new() -> Self {
        Self { prod: C64::new(1.0, 0.0), log: C64::new(0.0, 0.0), min: f64::INFINITY }
    }

    #[inline]
    fn push(&mut self, w: C64) {
        if w.norm_sqr() < SMALL * SMALL {
            self.log -= w + w * w * 0.5;
        } else {
            let f = C64::new(1.0, 0.0) - w;
            self.min = self.min.min(f.norm());
            self.prod *= f;
        }
    }

    fn value(&self) -> C64 {
        self.prod * self.log.exp()
    }
}

fn poch_acc(z: C64, nomes: &[C64], policy: &TruncationPolicy, acc: &mut Acc) -> Result<()> {
    match nomes.split_first() {
        None => {
            acc.push(z);
            Ok(())
        }
        Some((&q, rest)) => {
            let mut w = z;
            let mut terms = 0usize;
            loop {
                if w.norm() < policy.tail_tol {
                    break;
                }
                if terms >= policy.max_terms {
                    return Err(Error::Overflow(policy.max_terms));
                }
                poch_acc(w, rest, policy, acc)?;
                w *= q;
                terms += 1;
                if q == C64::new(0.0, 0.0) {
                    break;
                }
            }
            Ok(())
        }
    }
}

/// `(z; q_1, …, q_m)_∞` together with the smallest factor modulus seen.
fn poch_inner(z: C64, nomes: &[C64], policy: &TruncationPolicy) -> Result<(C64, f64)> {
    let mut acc = Acc::new();
    poch_acc(z, nomes, policy, &mut acc)?;
    Ok((acc.value(), acc.min))
}

/// Multi-nome product `(z; q_1, …, q_m)_∞ = Π (1 − z q_1^{i_1}⋯q_m^{i_m})`.
/// With no nomes this is `1 − z`.
pub fn poch(z: C64, nomes: &[C64], policy: &TruncationPolicy) -> Result<C64> {
    check_nomes(nomes)?;
    if nomes.is_empty() {
        return Ok(C64::new(1.0, 0.0) - z);
    }
    poch_inner(z, nomes, policy).map(|(p, _)| p)
}

/// Real-nome convenience wrapper around [`poch`].
pub fn pochr(z: C64, nomes: &[f64], policy: &TruncationPolicy) -> Result<C64> {
    let qs: Vec<C64> = nomes.iter().map(|&q| C64::new(q, 0.0)).collect();
    poch(z, &qs, policy)
}

/// Like [`pochr`] but refuses a vanishing factor; for use in denominators.
pub fn pochr_den(z: C64, nomes: &[f64], policy: &TruncationPolicy, label: &str) -> Result<C64> {
    let qs: Vec<C64> = nomes.iter().map(|&q| C64::new(q, 0.0)).collect();
    check_nomes(&qs)?;
    let (p, min) = poch_inner(z, &qs, policy)?;
    if min < POLE_TOL {
        return Err(Error::PoleHit(format!("{label}: factor of ({z}; …) vanishes")));
    }
    Ok(p)
}

fn theta_inner(z: C64, q: C64, policy: &TruncationPolicy) -> Result<(C64, f64)> {
    if q.norm() == 0.0 || q.norm() >= 1.0 {
        return Err(Error::NomeOutOfRange(q.norm()));
    }
    if z.norm() == 0.0 {
        return Err(Error::ZeroArgument);
    }
    let (a, ma) = poch_inner(z, &[q], policy)?;
    let (b, mb) = poch_inner(q / z, &[q], policy)?;
    let (c, _) = poch_inner(q, &[q], policy)?;
    Ok((a * b * c, ma.min(mb)))
}

/// `Θ_q(z) = (z;q)_∞ (q/z;q)_∞ (q;q)_∞`.
pub fn theta_big(z: C64, q: C64, policy: &TruncationPolicy) -> Result<C64> {
    theta_inner(z, q, policy).map(|(t, _)| t)
}

/// Jacobi theta with characteristics,
/// `ϑ[a;b](v;τ) = Σ_m exp(πi(m+a)((m+a)τ + 2(v+b)))`.
pub fn jacobi_theta(a: f64, b: f64, v: C64, tau: C64, policy: &TruncationPolicy) -> Result<C64> {
    if tau.im <= 0.0 {
        return Err(Error::BadModulus(tau.im));
    }
    let i_pi = C64::new(0.0, PI);
    let term = |m: f64| -> C64 {
        let ma = m + a;
        (i_pi * ma * (ma * tau + 2.0 * (v + b))).exp()
    };
    // Start at the dominant term and walk outwards.
    let m0 = (-v.im / tau.im - a).round();
    let mut sum = term(m0);
    let mut scale = sum.norm();
    for dir in [1.0, -1.0] {
        let mut k = 1usize;
        loop {
            if k > policy.max_terms {
                return Err(Error::Overflow(policy.max_terms));
            }
            let t = term(m0 + dir * k as f64);
            sum += t;
            scale = scale.max(t.norm());
            if t.norm() <= policy.tail_tol * scale.max(sum.norm()) && k > 1 {
                break;
            }
            k += 1;
        }
    }
    Ok(sum)
}

fn bracket_parts(v: C64, family: BracketFamily, level: f64, x: f64) -> (C64, C64) {
    let one = C64::new(1.0, 0.0);
    match family {
        BracketFamily::Square => (xpow(x, v * v / level - v), xpow(x, 2.0 * v)),
        BracketFamily::Brace => (xpow(x, v * v / level - v), -xpow(x, 2.0 * v)),
        BracketFamily::DblSquare => (xpow(x, v * v / level), xpow(x, 2.0 * v + level * one)),
        BracketFamily::DblBrace => (xpow(x, v * v / level), -xpow(x, 2.0 * v + level * one)),
    }
}

/// Bracket at an explicit real level (the value substituted for `r`).
pub fn bracket_at(v: C64, family: BracketFamily, level: f64, x: f64, policy: &TruncationPolicy) -> Result<C64> {
    let (pre, arg) = bracket_parts(v, family, level, x);
    Ok(pre * theta_big(arg, C64::new(x.powf(2.0 * level), 0.0), policy)?)
}

/// Any of the four bracket families at level r, r−1 or 1.
pub fn bracket(v: C64, spec: BracketSpec, params: &EllipticParams, policy: &TruncationPolicy) -> Result<C64> {
    bracket_at(v, spec.family, params.level(spec.level), params.x, policy)
}

/// Bracket for use in a denominator: a vanishing theta factor is a
/// [`Error::PoleHit`].
pub fn bracket_den(v: C64, spec: BracketSpec, params: &EllipticParams, policy: &TruncationPolicy) -> Result<C64> {
    let level = params.level(spec.level);
    let (pre, arg) = bracket_parts(v, spec.family, level, params.x);
    let (t, min) = theta_inner(arg, C64::new(params.x.powf(2.0 * level), 0.0), policy)?;
    if min < POLE_TOL {
        return Err(Error::PoleHit(format!("{:?} bracket at v = {v} vanishes", spec)));
    }
    Ok(pre * t)
}

/// Symmetric q-integer `[a]_x = (x^a − x^{−a})/(x − x^{−1})`.
pub fn x_number(a: f64, x: f64) -> f64 {
    (x.powf(a) - x.powf(-a)) / (x - 1.0 / x)
}

/// `[m]′! = Π_{p=1}^m [p]′`.
pub fn bracket_factorial(m: i64, params: &EllipticParams, policy: &TruncationPolicy) -> Result<C64> {
    if m < 0 {
        return Err(Error::NegativeInput(m));
    }
    let spec = BracketSpec::new(BracketFamily::Square, Level::RMinus1);
    let mut acc = C64::new(1.0, 0.0);
    for p in 1..=m {
        acc *= bracket(C64::new(p as f64, 0.0), spec, params, policy)?;
    }
    Ok(acc)
}

/// Shorthands used throughout.
pub mod br {
    use super::*;
    pub const SQ: BracketSpec = BracketSpec::new(BracketFamily::Square, Level::R);
    pub const SQ_P: BracketSpec = BracketSpec::new(BracketFamily::Square, Level::RMinus1);
    pub const SQ_1: BracketSpec = BracketSpec::new(BracketFamily::Square, Level::One);
    pub const BR: BracketSpec = BracketSpec::new(BracketFamily::Brace, Level::R);
    pub const BR_P: BracketSpec = BracketSpec::new(BracketFamily::Brace, Level::RMinus1);
    pub const BR_1: BracketSpec = BracketSpec::new(BracketFamily::Brace, Level::One);
    pub const DSQ: BracketSpec = BracketSpec::new(BracketFamily::DblSquare, Level::R);
    pub const DSQ_P: BracketSpec = BracketSpec::new(BracketFamily::DblSquare, Level::RMinus1);
    pub const DSQ_1: BracketSpec = BracketSpec::new(BracketFamily::DblSquare, Level::One);
    pub const DBR_P: BracketSpec = BracketSpec::new(BracketFamily::DblBrace, Level::RMinus1);
    pub const DBR_1: BracketSpec = BracketSpec::new(BracketFamily::DblBrace, Level::One);
}
