//! Scalar kernels: `g_j`, `r_j`, `g*_j`, `r*_j`, `ρ_j`, `χ_j`, the integral
//! kernels `f, h, f*, h*`, the gauge factor `f′`, `F_{ψ*ψ*}` and `β_m`.
//!
//! Throughout `z = x^{2v}` and `z^α` is evaluated as `x^{2vα}`.

use crate::error::{Error, Result};
use crate::qseries::{self, br, xpow, BracketSpec, EllipticParams, TruncationPolicy};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// Branch convention used for the n-th root in `f′`.
pub const FPRIME_ROOT_BRANCH: &str = "nth_root(-P) = exp((ln P + i*pi)/n), P > 0";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelContext {
    pub params: EllipticParams,
    pub policy: TruncationPolicy,
}

impl KernelContext {
    pub fn new(params: EllipticParams) -> Self {
        Self { params, policy: TruncationPolicy::default() }
    }

    pub fn with_policy(params: EllipticParams, policy: TruncationPolicy) -> Self {
        Self { params, policy }
    }

    fn x(&self) -> f64 {
        self.params.x
    }

    fn xp(&self, a: f64) -> f64 {
        self.params.x.powf(a)
    }

    pub(crate) fn num(&self, z: C64, nomes: &[f64]) -> Result<C64> {
        qseries::pochr(z, nomes, &self.policy)
    }

    pub(crate) fn den(&self, z: C64, nomes: &[f64], label: &str) -> Result<C64> {
        qseries::pochr_den(z, nomes, &self.policy, label)
    }

    pub(crate) fn b(&self, v: C64, spec: BracketSpec) -> Result<C64> {
        qseries::bracket(v, spec, &self.params, &self.policy)
    }

    pub(crate) fn bd(&self, v: C64, spec: BracketSpec) -> Result<C64> {
        qseries::bracket_den(v, spec, &self.params, &self.policy)
    }

    fn z_of(&self, v: C64) -> C64 {
        xpow(self.x(), 2.0 * v)
    }

    fn check_j(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.params.n {
            return Err(Error::InvalidParams(format!("j = {j} outside 1..={}", self.params.n)));
        }
        Ok(())
    }
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `g_j(z)` built from `{z} = (z; x^{2r}, x^{2n})_∞`.
pub fn g_j(j: usize, z: C64, ctx: &KernelContext) -> Result<C64> {
    ctx.check_j(j)?;
    let (n, r) = (ctx.params.n as f64, ctx.params.r);
    let jf = j as f64;
    let nomes = [ctx.xp(2.0 * r), ctx.xp(2.0 * n)];
    let a = ctx.num(z * ctx.xp(2.0 * n + 2.0 * r - jf - 1.0), &nomes)?;
    let b = ctx.num(z * ctx.xp(jf + 1.0), &nomes)?;
    let cc = ctx.den(z * ctx.xp(2.0 * n - jf + 1.0), &nomes, "g_j")?;
    let d = ctx.den(z * ctx.xp(2.0 * r + jf - 1.0), &nomes, "g_j")?;
    Ok(a * b / (cc * d))
}

/// `g*_j(z)` built from `{z}′ = (z; x^{2r−2}, x^{2n})_∞`.
pub fn gstar_j(j: usize, z: C64, ctx: &KernelContext) -> Result<C64> {
    ctx.check_j(j)?;
    let (n, r) = (ctx.params.n as f64, ctx.params.r);
    let jf = j as f64;
    let nomes = [ctx.xp(2.0 * r - 2.0), ctx.xp(2.0 * n)];
    let a = ctx.num(z * ctx.xp(2.0 * n + 2.0 * r - jf - 1.0), &nomes)?;
    let b = ctx.num(z * ctx.xp(jf - 1.0), &nomes)?;
    let cc = ctx.den(z * ctx.xp(2.0 * n - jf - 1.0), &nomes, "g*_j")?;
    let d = ctx.den(z * ctx.xp(2.0 * r + jf - 1.0), &nomes, "g*_j")?;
    Ok(a * b / (cc * d))
}

/// `(g_j(z), r_j(v))` with `r_j(v) = z^{((r−1)/r)((n−j)/n)} g_j(z^{-1})/g_j(z)`.
pub fn g_and_r(j: usize, v: C64, ctx: &KernelContext) -> Result<(C64, C64)> {
    let z = ctx.z_of(v);
    let g = g_j(j, z, ctx)?;
    let gi = g_j(j, z.inv(), ctx)?;
    let (n, r) = (ctx.params.n as f64, ctx.params.r);
    let expo = (r - 1.0) / r * (n - j as f64) / n;
    if g.norm() == 0.0 {
        return Err(Error::PoleHit(format!("g_{j}(z) = 0 at v = {v}")));
    }
    Ok((g, xpow(ctx.x(), 2.0 * v * expo) * gi / g))
}

/// `(g*_j(z), r*_j(v))` with exponent `(r/(r−1))((n−j)/n)`.
pub fn gstar_and_rstar(j: usize, v: C64, ctx: &KernelContext) -> Result<(C64, C64)> {
    let z = ctx.z_of(v);
    let g = gstar_j(j, z, ctx)?;
    let gi = gstar_j(j, z.inv(), ctx)?;
    let (n, r) = (ctx.params.n as f64, ctx.params.r);
    let expo = r / (r - 1.0) * (n - j as f64) / n;
    if g.norm() == 0.0 {
        return Err(Error::PoleHit(format!("g*_{j}(z) = 0 at v = {v}")));
    }
    Ok((g, xpow(ctx.x(), 2.0 * v * expo) * gi / g))
}

/// `ρ_j(z)` with nomes `(x², x^{2n})`.
pub fn rho_j(j: usize, z: C64, ctx: &KernelContext) -> Result<C64> {
    ctx.check_j(j)?;
    let n = ctx.params.n as f64;
    let jf = j as f64;
    let nomes = [ctx.xp(2.0), ctx.xp(2.0 * n)];
    let a = ctx.num(z * ctx.xp(2.0 * jf + 1.0), &nomes)?;
    let b = ctx.num(z * ctx.xp(2.0 * n - 2.0 * jf + 1.0), &nomes)?;
    let cc = ctx.den(z * ctx.x(), &nomes, "rho_j")?;
    let d = ctx.den(z * ctx.xp(2.0 * n + 1.0), &nomes, "rho_j")?;
    Ok(a * b / (cc * d))
}

/// `χ_j(v) = (−z)^{−j(n−j)/n} ρ_j(z^{-1})/ρ_j(z)` on the fixed branch
/// `(−z)^α = exp(α(2v ln x + iπ))`.
pub fn chi_j(j: usize, v: C64, ctx: &KernelContext) -> Result<C64> {
    let z = ctx.z_of(v);
    let rz = rho_j(j, z, ctx)?;
    if rz.norm() == 0.0 {
        return Err(Error::PoleHit(format!("rho_{j}(z) = 0 at v = {v}")));
    }
    let rzi = rho_j(j, z.inv(), ctx)?;
    let n = ctx.params.n as f64;
    let alpha = -(j as f64) * (n - j as f64) / n;
    let pre = (alpha * (2.0 * v * ctx.x().ln() + C64::new(0.0, PI))).exp();
    Ok(pre * rzi / rz)
}

/// `χ(v) = χ_1(v)`.
pub fn chi(v: C64, ctx: &KernelContext) -> Result<C64> {
    chi_j(1, v, ctx)
}

/// The four integral kernels of the type I and type II operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FfKernels {
    pub f: C64,
    pub h: C64,
    pub fstar: C64,
    pub hstar: C64,
}

fn den_named(ctx: &KernelContext, v: C64, arg: C64, spec: BracketSpec, name: &str) -> Result<C64> {
    ctx.bd(arg, spec).map_err(|e| match e {
        Error::PoleHit(_) => Error::PoleHit(format!("denominator {name} vanishes at v = {v}")),
        other => other,
    })
}

/// `f(v,w) = [v+½−w]/[v−½]`.
pub fn f_kernel(v: C64, w: C64, ctx: &KernelContext) -> Result<C64> {
    Ok(ctx.b(v + 0.5 - w, br::SQ)? / den_named(ctx, v, v - 0.5, br::SQ, "[v-1/2]")?)
}

/// `h(v) = [v−1]/[v+1]`.
pub fn h_kernel(v: C64, ctx: &KernelContext) -> Result<C64> {
    Ok(ctx.b(v - 1.0, br::SQ)? / den_named(ctx, v, v + 1.0, br::SQ, "[v+1]")?)
}

/// `f*(v,w) = [v−½+w]′/[v+½]′`.
pub fn fstar_kernel(v: C64, w: C64, ctx: &KernelContext) -> Result<C64> {
    Ok(ctx.b(v - 0.5 + w, br::SQ_P)? / den_named(ctx, v, v + 0.5, br::SQ_P, "[v+1/2]'")?)
}

/// `h*(v) = [v+1]′/[v−1]′`.
pub fn hstar_kernel(v: C64, ctx: &KernelContext) -> Result<C64> {
    Ok(ctx.b(v + 1.0, br::SQ_P)? / den_named(ctx, v, v - 1.0, br::SQ_P, "[v-1]'")?)
}

/// All four kernels at once; fails if any denominator vanishes.
pub fn ff_kernels(v: C64, w: C64, ctx: &KernelContext) -> Result<FfKernels> {
    Ok(FfKernels {
        f: f_kernel(v, w, ctx)?,
        h: h_kernel(v, ctx)?,
        fstar: fstar_kernel(v, w, ctx)?,
        hstar: hstar_kernel(v, ctx)?,
    })
}

/// Gauge factor `f′(v)` relating `t′` to the level-(r−1) intertwiner.
pub fn f_prime(v: C64, ctx: &KernelContext) -> Result<C64> {
    let (n, r, x) = (ctx.params.n as f64, ctx.params.r, ctx.x());
    let z = ctx.z_of(v);
    let expo = -v * v / (n * (r - 1.0)) - (r + n - 2.0) * v / (n * (r - 1.0))
        - (n - 1.0) * (3.0 * r + n - 5.0) / (6.0 * n * (r - 1.0));
    let p = ctx.num(c(ctx.xp(2.0 * r - 2.0)), &[ctx.xp(2.0 * r - 2.0)])?.re;
    let root = ((p.ln() + C64::new(0.0, PI)) / n).exp();
    let nomes = [ctx.xp(2.0 * n), ctx.xp(2.0 * r - 2.0)];
    let a = ctx.num(x * x / z, &nomes)?;
    let b = ctx.num(z * ctx.xp(2.0 * r + 2.0 * n - 2.0), &nomes)?;
    let cc = ctx.den(z.inv(), &nomes, "f'")?;
    let d = ctx.den(z * ctx.xp(2.0 * r + 2.0 * n - 4.0), &nomes, "f'")?;
    Ok(xpow(x, expo) / root * a * b / (cc * d))
}

fn fpsi_nomes(ctx: &KernelContext) -> [f64; 3] {
    let q = ctx.xp(4.0);
    [q, q, ctx.xp(2.0 * ctx.params.r - 2.0)]
}

/// `F_{ψ*ψ*}(z)`, a ratio of eight triple-nome products.
pub fn f_psipsi(z: C64, ctx: &KernelContext) -> Result<C64> {
    if z.norm() == 0.0 {
        return Err(Error::ZeroArgument);
    }
    let r = ctx.params.r;
    let nm = fpsi_nomes(ctx);
    let zi = z.inv();
    let num = ctx.num(z, &nm)?
        * ctx.num(zi * ctx.xp(4.0), &nm)?
        * ctx.num(z * ctx.xp(2.0 * r + 2.0), &nm)?
        * ctx.num(zi * ctx.xp(2.0 * r + 6.0), &nm)?;
    let den = ctx.den(z * ctx.xp(2.0), &nm, "F_psipsi")?
        * ctx.den(zi * ctx.xp(6.0), &nm, "F_psipsi")?
        * ctx.den(z * ctx.xp(2.0 * r), &nm, "F_psipsi")?
        * ctx.den(zi * ctx.xp(2.0 * r + 4.0), &nm, "F_psipsi")?;
    Ok(num / den)
}

/// Which local operator `β_m` belongs to: `{0}` for σ^z, `⟦0⟧` for σ^x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalOp {
    SigmaZ,
    SigmaX,
}

/// `β_m` at reference point `u` (`z = x^{2u}`); n = 2 only.
pub fn beta_m(m: i64, u: f64, op: LocalOp, ctx: &KernelContext) -> Result<C64> {
    if m < 1 {
        return Err(Error::NonpositiveM(m));
    }
    if ctx.params.n != 2 {
        return Err(Error::InvalidParams("beta_m requires n = 2".into()));
    }
    let (r, x) = (ctx.params.r, ctx.x());
    let mf = m as f64;
    let zero = match op {
        LocalOp::SigmaZ => ctx.b(c(0.0), br::BR)?,
        LocalOp::SigmaX => ctx.b(c(0.0), br::DSQ)?,
    };
    let fact_m1 = qseries::bracket_factorial(m - 1, &ctx.params, &ctx.policy)?;
    let one_p = ctx.b(c(1.0), br::SQ_P)?;
    let p1 = |a: f64, q: f64| ctx.num(c(a), &[q]);
    let nm = fpsi_nomes(ctx);
    let p3 = |a: f64| ctx.num(c(a), &nm);

    let mut num = c(x.powf(-(r - 1.0) / (4.0 * r))) * zero * fact_m1;
    num *= c(x.powf((2.0 * u - 2.0) * (r - 1.0) / (2.0 * r)));
    num *= p1(x * x, x.powi(4))?.powi(2);
    num *= p1(x * x, ctx.xp(2.0 * r))?;
    num *= p1(ctx.xp(2.0 * r + 1.0), ctx.xp(2.0 * r - 2.0))?;

    let factorial: f64 = (1..m).map(|k| k as f64).product();
    let g1 = {
        let two = KernelContext::with_policy(EllipticParams { n: 2, ..ctx.params }, ctx.policy);
        g_j(1, c(x * x), &two)?
    };
    let mut den = c(factorial) * one_p.powf(mf) * (1.0 / x - x) * g1;
    den *= p1(ctx.xp(2.0 * r), ctx.xp(2.0 * r))?.powi(2);
    den *= p1(ctx.xp(2.0 * r + 1.0), ctx.xp(2.0 * r))?;

    let mut tail = (p1(x * x, x * x)? * p1(ctx.xp(2.0 * r), ctx.xp(2.0 * r - 2.0))?).powf(mf - 1.0);
    tail *= (p3(x.powi(4))? * p3(ctx.xp(2.0 * r + 6.0))? / (p3(x.powi(6))? * p3(ctx.xp(2.0 * r + 4.0))?)).powf(mf);
    if den.norm() == 0.0 {
        return Err(Error::PoleHit("beta_m denominator vanishes".into()));
    }
    Ok(num / den * tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(n: usize, r: f64, x: f64) -> KernelContext {
        KernelContext::new(EllipticParams::new(n, r, x).unwrap())
    }

    // Oracle: (z; q1, q2)_∞ by a plain double loop.
    fn dprod(z: C64, q1: f64, q2: f64) -> C64 {
        let mut p = C64::new(1.0, 0.0);
        for i in 0..120 {
            for j in 0..120 {
                let t = q1.powi(i) * q2.powi(j);
                if t < 1e-20 {
                    break;
                }
                p *= C64::new(1.0, 0.0) - z * t;
            }
        }
        p
    }

    #[test]
    fn g1_matches_double_product() {
        let k = ctx(2, 3.0, 0.4);
        let (x, r, n) = (0.4f64, 3.0f64, 2.0f64);
        let z = C64::new(0.5, 0.0);
        let b = |a: f64| dprod(z * x.powf(a), x.powf(2.0 * r), x.powf(2.0 * n));
        let want = b(2.0 * n + 2.0 * r - 2.0) * b(2.0) / (b(2.0 * n) * b(2.0 * r));
        let got = g_j(1, z, &k).unwrap();
        assert!((got - want).norm() < 1e-13 * want.norm());
    }

    #[test]
    fn gstar1_matches_double_product() {
        let k = ctx(2, 3.0, 0.4);
        let (x, r, n) = (0.4f64, 3.0f64, 2.0f64);
        let z = C64::new(0.3, 0.0);
        let b = |a: f64| dprod(z * x.powf(a), x.powf(2.0 * r - 2.0), x.powf(2.0 * n));
        let want = b(2.0 * n + 2.0 * r - 2.0) * b(0.0) / (b(2.0 * n - 2.0) * b(2.0 * r));
        let got = gstar_j(1, z, &k).unwrap();
        assert!((got - want).norm() < 1e-13 * want.norm());
    }

    #[test]
    fn rho1_matches_double_product() {
        let k = ctx(2, 3.0, 0.4);
        let x = 0.4f64;
        let z = C64::new(0.2, 0.0);
        let b = |a: f64| dprod(z * x.powf(a), x * x, x.powi(4));
        let want = b(3.0) * b(3.0) / (b(1.0) * b(5.0));
        assert!((rho_j(1, z, &k).unwrap() - want).norm() < 1e-13);
    }

    #[test]
    fn r_n_has_no_prefactor() {
        let k = ctx(3, 2.7, 0.35);
        let v = C64::new(0.23, 0.1);
        let z = xpow(0.35, 2.0 * v);
        let (_, rn) = g_and_r(3, v, &k).unwrap();
        let want = g_j(3, z.inv(), &k).unwrap() / g_j(3, z, &k).unwrap();
        assert!((rn - want).norm() < 1e-14 * want.norm());
    }

    #[test]
    fn chi_aliases_chi_1_and_carries_branch_constant() {
        let k = ctx(2, 3.0, 0.4);
        let v = C64::new(0.31, 0.05);
        assert_eq!(chi(v, &k).unwrap(), chi_j(1, v, &k).unwrap());
        // the fixed branch leaves e^{2πiα}, α = −j(n−j)/n
        for (n, j) in [(2usize, 1usize), (3, 1), (3, 2), (3, 3)] {
            let k = ctx(n, 2.6, 0.45);
            let alpha = -(j as f64) * (n - j) as f64 / n as f64;
            let prod = chi_j(j, v, &k).unwrap() * chi_j(j, -v, &k).unwrap();
            let want = C64::from_polar(1.0, 2.0 * PI * alpha);
            assert!((prod - want).norm() < 1e-12, "n={n} j={j} {prod}");
        }
    }

    #[test]
    fn ff_kernel_zeros_and_poles() {
        let k = ctx(2, 3.0, 0.4);
        let w = C64::new(0.27, 0.0);
        assert!(h_kernel(C64::new(1.0, 0.0), &k).unwrap().norm() < 1e-15);
        assert!(f_kernel(w - 0.5, w, &k).unwrap().norm() < 1e-15);
        assert!(fstar_kernel(0.5 - w, w, &k).unwrap().norm() < 1e-15);
        let all = ff_kernels(C64::new(0.31, 0.1), w, &k).unwrap();
        assert_eq!(all.h, h_kernel(C64::new(0.31, 0.1), &k).unwrap());
        match ff_kernels(C64::new(0.5, 0.0), w, &k) {
            Err(Error::PoleHit(msg)) => assert!(msg.contains("[v-1/2]")),
            other => panic!("{other:?}"),
        }
        match ff_kernels(C64::new(-0.5, 0.0), w, &k) {
            Err(Error::PoleHit(msg)) => assert!(msg.contains("[v+1/2]'")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn f_prime_oracle_and_pole() {
        let (x, r, n) = (0.4f64, 3.0f64, 2.0f64);
        let k = ctx(2, r, x);
        let v = 0.7;
        let z = x.powf(2.0 * v);
        let q1 = x.powf(2.0 * n);
        let q2 = x.powf(2.0 * r - 2.0);
        let p: f64 = (1..400).map(|i| 1.0 - q2.powi(i)).product();
        let pre = x.powf(-v * v / (n * (r - 1.0)) - (r + n - 2.0) * v / (n * (r - 1.0)) - (n - 1.0) * (3.0 * r + n - 5.0) / (6.0 * n * (r - 1.0)));
        let root = C64::new(0.0, 1.0) * p.sqrt();
        let cz = |a: f64| C64::new(a, 0.0);
        let want = pre / root * dprod(cz(x * x / z), q1, q2) * dprod(cz(z * x.powf(2.0 * r + 2.0 * n - 2.0)), q1, q2)
            / (dprod(cz(1.0 / z), q1, q2) * dprod(cz(z * x.powf(2.0 * r + 2.0 * n - 4.0)), q1, q2));
        let got = f_prime(cz(v), &k).unwrap();
        assert!((got - want).norm() < 1e-12 * want.norm(), "{got} {want}");
        assert!(matches!(f_prime(cz(0.0), &k), Err(Error::PoleHit(_))));
    }

    // Oracle: (z; q, q, p)_∞ = Π_{s,k} (1 − z q^s p^k)^{s+1}.
    fn tprod(z: C64, q: f64, p: f64) -> C64 {
        let mut acc = C64::new(1.0, 0.0);
        for s in 0..60 {
            for k in 0..200 {
                let t = q.powi(s) * p.powi(k);
                if t < 1e-20 {
                    break;
                }
                acc *= (C64::new(1.0, 0.0) - z * t).powi(s + 1);
            }
        }
        acc
    }

    #[test]
    fn f_psipsi_at_one_matches_oracle() {
        let (x, r) = (0.4f64, 3.0f64);
        let k = ctx(2, r, x);
        let (q, p) = (x.powi(4), x.powf(2.0 * r - 2.0));
        let t = |a: f64| tprod(C64::new(a, 0.0), q, p);
        let want = t(1.0) * t(x.powi(4)) * t(x.powf(2.0 * r + 2.0)) * t(x.powf(2.0 * r + 6.0))
            / (t(x * x) * t(x.powi(6)) * t(x.powf(2.0 * r)) * t(x.powf(2.0 * r + 4.0)));
        let got = f_psipsi(C64::new(1.0, 0.0), &k).unwrap();
        assert!(want.norm() < 1e-14 && got.norm() < 1e-14);
        let z = C64::new(0.63, 0.2);
        let tz = |a: C64| tprod(a, q, p);
        let want = tz(z) * tz(x.powi(4) / z) * tz(z * x.powf(2.0 * r + 2.0)) * tz(x.powf(2.0 * r + 6.0) / z)
            / (tz(z * x * x) * tz(x.powi(6) / z) * tz(z * x.powf(2.0 * r)) * tz(x.powf(2.0 * r + 4.0) / z));
        let got = f_psipsi(z, &k).unwrap();
        assert!((got - want).norm() < 1e-12 * want.norm());
        // zero set
        let zz = C64::new(x.powi(8) * p, 0.0);
        assert!(f_psipsi(zz, &k).unwrap().norm() < 1e-12);
    }

    #[test]
    fn beta_ratio_matches_quotient() {
        let k = ctx(2, 3.0, 0.4);
        let (x, r) = (0.4f64, 3.0f64);
        let b1 = beta_m(1, 0.5, LocalOp::SigmaZ, &k).unwrap();
        let b2 = beta_m(2, 0.5, LocalOp::SigmaZ, &k).unwrap();
        let pol = TruncationPolicy::default();
        let p1 = |a: f64, q: f64| qseries::pochr(C64::new(a, 0.0), &[q], &pol).unwrap();
        let nm = [x.powi(4), x.powi(4), x.powf(2.0 * r - 2.0)];
        let p3 = |a: f64| qseries::pochr(C64::new(a, 0.0), &nm, &pol).unwrap();
        // the bracket-factorial pieces cancel between m = 2 and m = 1
        let want = p1(x * x, x * x) * p1(x.powf(2.0 * r), x.powf(2.0 * r - 2.0)) * (p3(x.powi(4)) * p3(x.powf(2.0 * r + 6.0)))
            / (p3(x.powi(6)) * p3(x.powf(2.0 * r + 4.0)));
        assert!((b2 / b1 - want).norm() < 1e-12 * want.norm());
        assert_eq!(beta_m(0, 0.5, LocalOp::SigmaZ, &k), Err(Error::NonpositiveM(0)));
    }

    #[test]
    fn beta_1_direct() {
        let (x, r, u) = (0.4f64, 3.0f64, 0.5f64);
        let k = ctx(2, r, x);
        let pol = TruncationPolicy::default();
        let p1 = |a: f64, q: f64| qseries::pochr(C64::new(a, 0.0), &[q], &pol).unwrap();
        let nm = [x.powi(4), x.powi(4), x.powf(2.0 * r - 2.0)];
        let p3 = |a: f64| qseries::pochr(C64::new(a, 0.0), &nm, &pol).unwrap();
        let brace0 = qseries::bracket(C64::new(0.0, 0.0), br::BR, &k.params, &pol).unwrap();
        let one_p = qseries::bracket(C64::new(1.0, 0.0), br::SQ_P, &k.params, &pol).unwrap();
        let zz = C64::new(x * x, 0.0);
        let bb = |a: f64| dprod(zz * x.powf(a), x.powf(2.0 * r), x.powi(4));
        let g1 = bb(2.0 * r + 2.0) * bb(2.0) / (bb(4.0) * bb(2.0 * r));
        let want = x.powf(-(r - 1.0) / (4.0 * r)) * brace0 * x.powf((2.0 * u - 2.0) * (r - 1.0) / (2.0 * r))
            * p1(x * x, x.powi(4)).powi(2) * p1(x * x, x.powf(2.0 * r)) * p1(x.powf(2.0 * r + 1.0), x.powf(2.0 * r - 2.0))
            / (one_p * (1.0 / x - x) * g1 * p1(x.powf(2.0 * r), x.powf(2.0 * r)).powi(2) * p1(x.powf(2.0 * r + 1.0), x.powf(2.0 * r)))
            * p3(x.powi(4)) * p3(x.powf(2.0 * r + 6.0)) / (p3(x.powi(6)) * p3(x.powf(2.0 * r + 4.0)));
        let got = beta_m(1, u, LocalOp::SigmaZ, &k).unwrap();
        assert!((got - want).norm() < 1e-12 * want.norm());
        let gx = beta_m(1, u, LocalOp::SigmaX, &k).unwrap();
        let dsq0 = qseries::bracket(C64::new(0.0, 0.0), br::DSQ, &k.params, &pol).unwrap();
        assert!((gx / got - dsq0 / brace0).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn unitarity_of_r_and_rstar(vr in -0.45f64..0.45, vi in -0.3f64..0.3, n in 2usize..4, jj in 0usize..3) {
            let k = ctx(n, 2.7, 0.35);
            let j = 1 + jj % n;
            let v = C64::new(vr, vi);
            let (_, a) = g_and_r(j, v, &k).unwrap();
            let (_, b) = g_and_r(j, -v, &k).unwrap();
            prop_assert!((a * b - 1.0).norm() < 1e-12);
            let (_, a) = gstar_and_rstar(j, v, &k).unwrap();
            let (_, b) = gstar_and_rstar(j, -v, &k).unwrap();
            prop_assert!((a * b - 1.0).norm() < 1e-12);
        }

        #[test]
        fn f_psipsi_reflection(zr in 0.1f64..0.9, za in -3.0f64..3.0) {
            let k = ctx(2, 3.0, 0.4);
            let x4 = 0.4f64.powi(4);
            let z = C64::from_polar(zr * 0.4f64.powi(2) / 0.3 , za);
            let a = f_psipsi(z, &k).unwrap();
            let b = f_psipsi(x4 / z, &k).unwrap();
            prop_assert!((a - b).norm() < 1e-12 * a.norm().max(1.0));
        }

        #[test]
        fn f_prime_self_ratio(vr in 0.1f64..0.9, vi in -0.3f64..0.3) {
            let k = ctx(2, 3.0, 0.4);
            let v = C64::new(vr, vi);
            let a = f_prime(v, &k).unwrap();
            prop_assert!((a / f_prime(v, &k).unwrap() - 1.0).norm() < 1e-15);
        }
    }
}
