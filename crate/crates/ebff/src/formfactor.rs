//! Form factors of the n = 2 model: zero-mode resummation, the kinematic
//! factors `Z_m`/`X_m`, the face-path contour integral, the closed two-point
//! forms and the consistency relations tying them together.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::exec::Exec;
use crate::kernels::{self, KernelContext, LocalOp};
use crate::qseries::{self, br, neg_pow, pochr, pochr_den, sign_r_pow, xpow, BracketSpec, EllipticParams};
use crate::{Error, Result, C64};

/// Relative singular-value cutoff of the min-norm extraction.
pub const EXTRACT_RCOND: f64 = 1e-10;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `(−1)^{1−i}`.
pub fn sector_sign(i: usize) -> f64 {
    if i % 2 == 0 {
        -1.0
    } else {
        1.0
    }
}

/// `b_ν`: 0 for ν = +, 1/2 for ν = −.
pub fn b_nu(nu: i8) -> f64 {
    if nu > 0 {
        0.0
    } else {
        0.5
    }
}

/// Parameters of an n = 2 form factor.
#[derive(Debug, Clone, PartialEq)]
pub struct FF2Params {
    pub params: EllipticParams,
    pub u: f64,
    pub u0: f64,
    pub l: f64,
    pub sector: usize,
    pub us: Vec<f64>,
    pub nus: Vec<i8>,
    pub c_z: f64,
    pub c_x: f64,
}

impl FF2Params {
    pub fn new(params: EllipticParams, u: f64, u0: f64, l: f64, sector: usize, us: Vec<f64>) -> Result<Self> {
        let nus = vec![1; us.len()];
        let p = Self { params, u, u0, l, sector, us, nus, c_z: 1.0, c_x: 1.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_rapidities(&self, us: Vec<f64>) -> Self {
        Self { nus: vec![1; us.len()], us, ..self.clone() }
    }

    pub fn m(&self) -> usize {
        self.us.len() / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.n != 2 {
            return Err(Error::InvalidParams(format!("form factors need n = 2, got {}", self.params.n)));
        }
        if self.sector > 1 {
            return Err(Error::InvalidParams(format!("sector {} not in {{0,1}}", self.sector)));
        }
        if self.us.is_empty() || self.us.len() % 2 != 0 {
            return Err(Error::InvalidParams(format!("need 2m >= 2 rapidities, got {}", self.us.len())));
        }
        if self.nus.len() != self.us.len() || self.nus.iter().any(|&n| n != 1 && n != -1) {
            return Err(Error::InvalidParams("spin labels must be ±1, one per rapidity".into()));
        }
        let vals = [self.u, self.u0, self.l].into_iter().chain(self.us.iter().copied());
        if vals.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite rapidity or label".into()));
        }
        Ok(())
    }

    /// `(max_j x³|z_j|, min_j x|z_j|)`.
    pub fn annulus(&self) -> Result<(f64, f64)> {
        let x = self.params.x;
        let zs = self.us.iter().map(|&t| x.powf(2.0 * t));
        let (zmin, zmax) = zs.fold((f64::INFINITY, 0.0f64), |(a, b), z| (a.min(z), b.max(z)));
        let (inner, outer) = (x.powi(3) * zmax, x * zmin);
        if inner >= outer {
            return Err(Error::AnnulusEmpty { inner, outer });
        }
        Ok((inner, outer))
    }
}

/// How the common radius `|w_a|` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusRule {
    /// `x²(Π|z_j|)^{1/(2m)}`, falling back to the log-midpoint of the annulus.
    GeometricMean,
    /// `inner^{1−t} outer^t` for `t ∈ (0,1)`.
    Interpolate(f64),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourSpec {
    pub radius: RadiusRule,
    pub points: usize,
}

impl Default for ContourSpec {
    fn default() -> Self {
        Self { radius: RadiusRule::GeometricMean, points: 512 }
    }
}

impl ContourSpec {
    pub fn new(radius: RadiusRule, points: usize) -> Self {
        Self { radius, points }
    }

    pub fn radius_for(&self, p: &FF2Params) -> Result<f64> {
        let (lo, hi) = p.annulus()?;
        let x = p.params.x;
        let rho = match self.radius {
            RadiusRule::GeometricMean => {
                let m = p.m() as f64;
                let s: f64 = p.us.iter().sum();
                let rho = x * x * x.powf(2.0 * s / (2.0 * m));
                if rho > lo && rho < hi {
                    rho
                } else {
                    (lo * hi).sqrt()
                }
            }
            RadiusRule::Interpolate(t) => {
                if !(t > 0.0 && t < 1.0) {
                    return Err(Error::InvalidParams(format!("radius fraction {t} not in (0,1)")));
                }
                lo.powf(1.0 - t) * hi.powf(t)
            }
            RadiusRule::Fixed(rho) => rho,
        };
        if !(rho > lo && rho < hi) {
            return Err(Error::InvalidParams(format!("radius {rho} outside annulus ({lo}, {hi})")));
        }
        Ok(rho)
    }

    fn check(&self) -> Result<()> {
        if self.points < 4 || self.points % 2 != 0 {
            return Err(Error::InvalidParams(format!("quadrature points must be even and >= 4, got {}", self.points)));
        }
        Ok(())
    }
}

/// A form-factor value with its quadrature error estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct FFValue {
    pub value: C64,
    pub quad_error: f64,
    pub params: FF2Params,
}

fn bk(v: C64, spec: BracketSpec, ctx: &KernelContext) -> Result<C64> {
    qseries::bracket(v, spec, &ctx.params, &ctx.policy)
}

fn bk_den(v: C64, spec: BracketSpec, ctx: &KernelContext) -> Result<C64> {
    qseries::bracket_den(v, spec, &ctx.params, &ctx.policy)
}

fn families(op: LocalOp) -> [BracketSpec; 4] {
    match op {
        LocalOp::SigmaZ => [br::SQ_P, br::SQ_1, br::BR_P, br::BR_1],
        LocalOp::SigmaX => [br::DSQ_P, br::DBR_1, br::DBR_P, br::DSQ_1],
    }
}

/// `Z_m` for σ^z, `X_m` for σ^x.
#[allow(clippy::too_many_arguments)]
pub fn kinematic(op: LocalOp, i: usize, l: C64, u: f64, u0: f64, us: &[f64], vs: &[C64], ctx: &KernelContext) -> Result<C64> {
    let half_u: f64 = us.iter().sum::<f64>() / 2.0;
    let s: C64 = vs.iter().sum();
    let a = l - u0 - s + half_u;
    let b = s + u - half_u;
    let [f1, f2, f3, f4] = families(op);
    Ok(bk(a, f1, ctx)? * bk(b, f2, ctx)? + sector_sign(i) * bk(a, f3, ctx)? * bk(b, f4, ctx)?)
}

#[allow(clippy::too_many_arguments)]
pub fn z_m(i: usize, l: C64, u: f64, u0: f64, us: &[f64], vs: &[C64], ctx: &KernelContext) -> Result<C64> {
    kinematic(LocalOp::SigmaZ, i, l, u, u0, us, vs, ctx)
}

#[allow(clippy::too_many_arguments)]
pub fn x_m(i: usize, l: C64, u: f64, u0: f64, us: &[f64], vs: &[C64], ctx: &KernelContext) -> Result<C64> {
    kinematic(LocalOp::SigmaX, i, l, u, u0, us, vs, ctx)
}

/// `(−w)^α` with `w = x^{2v}` continued along v.
fn neg_w(v: C64, alpha: f64, x: f64) -> C64 {
    (alpha * (2.0 * v * x.ln() + C64::new(0.0, PI))).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroModeReport {
    pub direct: C64,
    pub closed: C64,
    pub abs: f64,
    pub rel: f64,
}

/// One summand of the zero-mode sum at charge `k`.
pub fn zero_mode_term(k: f64, l: f64, u: f64, u0: f64, us: &[f64], vs: &[C64], ctx: &KernelContext) -> Result<C64> {
    let (r, x) = (ctx.params.r, ctx.params.x);
    let z = x.powf(2.0 * u);
    let z0 = x.powf(2.0 * u0);
    let mut term = qseries::bracket(c(u - u0 - 1.0 + k), br::BR, &ctx.params, &ctx.policy)?;
    for &t in us {
        term *= neg_pow(c(x.powf(2.0 * t)), r * l / (2.0 * (r - 1.0)) - k / 2.0);
    }
    term *= (z / x).powf(-l + (r - 1.0) * k / r);
    for &v in vs {
        term *= neg_w(v, -r * l / (r - 1.0) + k, x);
    }
    term *= sign_r_pow(c(x.powf(1.0 - r) * z0), r, -l / (r - 1.0) + k / r);
    term *= x.powf(r * l * l / (r - 1.0) - 2.0 * k * l + (r - 1.0) * k * k / r);
    Ok(term)
}

/// Truncated sum over `k = l + i + 2p`, `|p| ≤ K`.
#[allow(clippy::too_many_arguments)]
pub fn zero_mode_direct(i: usize, l: f64, u: f64, u0: f64, us: &[f64], vs: &[C64], k_max: usize, ctx: &KernelContext) -> Result<C64> {
    let kk = k_max as i64;
    let mut total = C64::new(0.0, 0.0);
    for p in -kk..=kk {
        total += zero_mode_term(l + i as f64 + 2.0 * p as f64, l, u, u0, us, vs, ctx)?;
    }
    Ok(total)
}

/// Resummed form `(−1)^{1−i}/2 · x^{…} · Z_m`.
pub fn zero_mode_closed(i: usize, l: f64, u: f64, u0: f64, us: &[f64], vs: &[C64], ctx: &KernelContext) -> Result<C64> {
    let (r, x) = (ctx.params.r, ctx.params.x);
    let half_u: f64 = us.iter().sum::<f64>() / 2.0;
    let s: C64 = vs.iter().sum();
    let e = (u - u0 - 1.0).powi(2) / r - (u0 + s - half_u).powi(2) / (r - 1.0) - (s + u - half_u - 1.0).powi(2);
    Ok(sector_sign(i) / 2.0 * xpow(x, e) * z_m(i, c(l), u, u0, us, vs, ctx)?)
}

#[allow(clippy::too_many_arguments)]
pub fn zero_mode_sum_check(i: usize, l: f64, u: f64, u0: f64, us: &[f64], vs: &[C64], k_max: usize, ctx: &KernelContext) -> Result<ZeroModeReport> {
    let direct = zero_mode_direct(i, l, u, u0, us, vs, k_max, ctx)?;
    let closed = zero_mode_closed(i, l, u, u0, us, vs, ctx)?;
    let abs = (direct - closed).norm();
    Ok(ZeroModeReport { direct, closed, abs, rel: abs / closed.norm() })
}

/// `Π_j 1/(x^{−1}z (xz_j/z; x⁴)(x³z/z_j; x⁴))`.
fn dressing(us: &[f64], u: f64, ctx: &KernelContext) -> Result<C64> {
    let x = ctx.params.x;
    let z = x.powf(2.0 * u);
    let q = [x.powi(4)];
    let mut d = c(1.0);
    for &t in us {
        let zj = x.powf(2.0 * t);
        d *= z / x * pochr_den(c(x * zj / z), &q, &ctx.policy, "dressing")? * pochr_den(c(x.powi(3) * z / zj), &q, &ctx.policy, "dressing")?;
    }
    Ok(d.inv())
}

/// `(x^{−1}z)^{2/r}/2 · x^{−(r+2)(u0−u)/r − 1/r}`.
fn gauge_factor(u: f64, u0: f64, r: f64, x: f64) -> f64 {
    (x.powf(2.0 * u) / x).powf(2.0 / r) / 2.0 * x.powf(-(r + 2.0) / r * (u0 - u) - 1.0 / r)
}

fn z_power(t: f64, alpha: f64, x: f64, branch: bool) -> C64 {
    let z = x.powf(2.0 * t);
    if branch {
        neg_pow(c(z), alpha)
    } else {
        c(z.powf(alpha))
    }
}

/// Integral-free prefactor. With `branch` the `(−z)^α`, `(−w)^α` phases are
/// kept; the f′·x^{q_j} factors are never included.
fn outer_factor(p: &FF2Params, branch: bool, ctx: &KernelContext) -> Result<C64> {
    let (r, x) = (ctx.params.r, ctx.params.x);
    let m = p.m();
    let us = &p.us;
    let mut f = c(1.0);
    for (j, &a) in us.iter().enumerate() {
        for &b in &us[j + 1..] {
            f *= z_power(a, r / (2.0 * (r - 1.0)), x, branch) * kernels::f_psipsi(c(x.powf(2.0 * (b - a))), ctx)?;
        }
        f *= z_power(a, -1.0 / (r - 1.0), x, branch);
    }
    f *= dressing(us, p.u, ctx)?;
    let z = x.powf(2.0 * p.u);
    for _ in 1..m {
        f *= z * z / (x * x);
        for &t in us {
            f *= z_power(t, -r / (r - 1.0), x, branch);
        }
    }
    if branch {
        let pairs = ((m - 1) * m.saturating_sub(2) / 2) as f64;
        let turns = pairs * 2.0 * r / (r - 1.0) + (m - 1) as f64 * 2.0 / (r - 1.0);
        f *= C64::new(0.0, PI * turns).exp();
    }
    Ok(f * gauge_factor(p.u, p.u0, r, x))
}

/// `Π_j x^{q_j} f′(u_j − u0 + 1/2)`.
fn fprime_factor(p: &FF2Params, ctx: &KernelContext) -> Result<C64> {
    let (r, x) = (ctx.params.r, ctx.params.x);
    let mut f = c(1.0);
    for &t in &p.us {
        let s = t - p.u0 + 0.5;
        let q = s * s / (4.0 * (r - 1.0)) + r * s / (2.0 * (r - 1.0)) + 0.25;
        f *= x.powf(q) * kernels::f_prime(c(s), ctx)?;
    }
    Ok(f)
}

/// Integrand over the screening variables `v_a` (`w_a = x^{2v_a}`), without
/// the phases of `(−w)^α`. Carries the extra `x^{2v_a/(r−1)}` that makes it
/// single-valued on the circle.
fn integrand(vs: &[C64], l: C64, p: &FF2Params, op: LocalOp, ctx: &KernelContext) -> Result<C64> {
    let (r, x) = (ctx.params.r, ctx.params.x);
    let (u, u0) = (p.u, p.u0);
    let m = p.m() as f64;
    let half_u: f64 = p.us.iter().sum::<f64>() / 2.0;
    let s: C64 = vs.iter().sum();
    let mut f = kinematic(op, p.sector, l, u, u0, &p.us, vs, ctx)?;
    for (a, &va) in vs.iter().enumerate() {
        for &vb in &vs[a + 1..] {
            let d = va - vb;
            f *= xpow(x, vb * (4.0 * r / (r - 1.0)))
                * bk(d, br::SQ_P, ctx)?
                * bk(d, br::SQ_1, ctx)?
                * xpow(x, -r / (r - 1.0) * (d - 1.0) * (d - 1.0));
        }
    }
    let nomes = [x.powi(4), x.powf(2.0 * r - 2.0)];
    let pol = &ctx.policy;
    for &v in vs {
        let w = xpow(x, 2.0 * v);
        f *= xpow(x, -(v - u) * (v - u) + v - u) * bk(v - u, br::SQ_1, ctx)? * xpow(x, 2.0 * v * 3.0 / (r - 1.0));
        f *= xpow(x, -(u0 - v - 1.0) * (u0 - v - 1.0) / (r - 1.0) + u0 - v - 1.0) * bk(v - u0 + l - m, br::SQ_P, ctx)?;
        for &t in &p.us {
            let zj = x.powf(2.0 * t);
            f *= pochr(x.powf(2.0 * r - 1.0) * w / zj, &nomes, pol)? * pochr(x.powf(2.0 * r + 3.0) * zj / w, &nomes, pol)?
                / (pochr_den(w / (x * zj), &nomes, pol, "contour")? * pochr_den(x.powi(3) * zj / w, &nomes, pol, "contour")?);
        }
    }
    f *= xpow(x, -(u0 + s - half_u) * (u0 + s - half_u) / (r - 1.0) - (s + u - half_u - 1.0) * (s + u - half_u - 1.0));
    Ok(f)
}

/// Mean of the integrand over the `(m−1)`-torus of radius ρ: the full-grid
/// and even-subgrid (N/2) trapezoid values.
fn torus_mean(rho: f64, n: usize, l: C64, p: &FF2Params, op: LocalOp, ctx: &KernelContext, exec: Exec) -> Result<(C64, C64)> {
    let dim = p.m() - 1;
    let lx = ctx.params.x.ln();
    let total = n.pow(dim as u32);
    let node = |idx: usize| -> Result<(C64, bool)> {
        let mut rest = idx;
        let mut even = true;
        let mut vs = Vec::with_capacity(dim);
        for _ in 0..dim {
            let k = rest % n;
            rest /= n;
            even &= k % 2 == 0;
            let th = 2.0 * PI * k as f64 / n as f64;
            vs.push(C64::new(rho.ln(), th) / (2.0 * lx));
        }
        Ok((integrand(&vs, l, p, op, ctx)?, even))
    };
    let vals = exec.map_range(total, node);
    let (mut full, mut half) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for v in vals {
        let (f, even) = v?;
        full += f;
        if even {
            half += f;
        }
    }
    Ok((full / total as f64, half / (n / 2).pow(dim as u32) as f64))
}

/// Contour integral at label `l` with error estimate; a pole on the nodes
/// triggers one retry at a shifted radius.
fn contour_integral(l: C64, p: &FF2Params, op: LocalOp, contour: &ContourSpec, ctx: &KernelContext, exec: Exec) -> Result<(C64, f64)> {
    if p.m() == 1 {
        return Ok((integrand(&[], l, p, op, ctx)?, 0.0));
    }
    contour.check()?;
    let (lo, hi) = p.annulus()?;
    let rho = contour.radius_for(p)?;
    match torus_mean(rho, contour.points, l, p, op, ctx, exec) {
        Ok((a, b)) => Ok((a, (a - b).norm())),
        Err(Error::PoleHit(first)) => {
            let mid = (lo * hi).sqrt();
            let rho2 = if (rho / mid).ln().abs() > 1e-3 * (hi / lo).ln() { (rho * mid).sqrt() } else { rho * (hi / lo).powf(0.125) };
            match torus_mean(rho2, contour.points, l, p, op, ctx, exec) {
                Ok((a, b)) => Ok((a, (a - b).norm())),
                Err(Error::PoleHit(second)) => Err(Error::ContourOnPole(format!("radius {rho}: {first}; radius {rho2}: {second}"))),
                Err(e) => Err(e),
            }
        }
        Err(e) => Err(e),
    }
}

/// The all-down face-path component `F_{l, l−1, …, l−2m}` with its branch
/// factors, f′ factors and `(−1)^{m−1}β_m`.
pub fn f_face_2m(p: &FF2Params, op: LocalOp, contour: &ContourSpec, ctx: &KernelContext, exec: Exec) -> Result<FFValue> {
    p.validate()?;
    let m = p.m();
    let beta = kernels::beta_m(m as i64, p.u, op, ctx)?;
    let outer = outer_factor(p, true, ctx)? * fprime_factor(p, ctx)? * beta * if m % 2 == 1 { 1.0 } else { -1.0 };
    let (i, err) = contour_integral(c(p.l), p, op, contour, ctx, exec)?;
    Ok(FFValue { value: outer * i, quad_error: outer.norm() * err, params: p.clone() })
}

/// Branch-free right side of the spin-basis relation:
/// `β_m · (z-power prefactors) · ∮ …` at a possibly complex label `l`.
pub fn face_reduced(l: C64, p: &FF2Params, op: LocalOp, contour: &ContourSpec, ctx: &KernelContext, exec: Exec) -> Result<FFValue> {
    p.validate()?;
    let beta = kernels::beta_m(p.m() as i64, p.u, op, ctx)?;
    let outer = outer_factor(p, false, ctx)? * beta;
    let (i, err) = contour_integral(l, p, op, contour, ctx, exec)?;
    Ok(FFValue { value: outer * i, quad_error: outer.norm() * err, params: p.clone() })
}

/// Ratio of the branch-carrying prefactor to the branch-free one times the
/// f′·x^{q_j} factors.
pub fn gathered_phase(p: &FF2Params, ctx: &KernelContext) -> Result<C64> {
    p.validate()?;
    Ok(outer_factor(p, true, ctx)? / outer_factor(p, false, ctx)?)
}

/// `e^{−iπ·3mr/(2(r−1))}`.
pub fn expected_phase(m: usize, r: f64) -> C64 {
    C64::new(0.0, -PI * 3.0 * m as f64 * r / (2.0 * (r - 1.0))).exp()
}

/// Whether a spin assignment survives the selection rule of `op`.
pub fn selection_allowed(op: LocalOp, nus: &[i8]) -> bool {
    let half: i64 = nus.iter().map(|&n| n as i64).sum::<i64>() / 2;
    match op {
        LocalOp::SigmaZ => half.rem_euclid(2) == 0,
        LocalOp::SigmaX => half.rem_euclid(2) == 1,
    }
}

/// Closed two-point form factor.
#[allow(clippy::too_many_arguments)]
pub fn f2(op: LocalOp, u1: f64, u2: f64, nu1: i8, nu2: i8, i: usize, p: &FF2Params, ctx: &KernelContext) -> Result<FFValue> {
    let mut echo = p.with_rapidities(vec![u1, u2]);
    echo.nus = vec![nu1, nu2];
    echo.sector = i;
    echo.validate()?;
    let allowed = match op {
        LocalOp::SigmaZ => nu1 + nu2 == 0,
        LocalOp::SigmaX => nu1 == nu2,
    };
    if !allowed {
        return Ok(FFValue { value: c(0.0), quad_error: 0.0, params: echo });
    }
    let (r, x) = (ctx.params.r, ctx.params.x);
    let (u, u0) = (p.u, p.u0);
    let half_u = (u1 + u2) / 2.0;
    let konst = match op {
        LocalOp::SigmaZ => p.c_z,
        LocalOp::SigmaX => p.c_x,
    };
    let mut pre = c(konst * x.powf(2.0 * u1 * r / (2.0 * (r - 1.0))));
    pre *= x.powf(-2.0 * (u1 + u2) / (r - 1.0));
    pre *= dressing(&[u1, u2], u, ctx)?;
    pre *= gauge_factor(u, u0, r, x) / 2.0;
    pre *= x.powf(-(u0 - half_u).powi(2) / (r - 1.0) - (u - half_u - 1.0).powi(2));
    pre *= kernels::f_psipsi(c(x.powf(2.0 * (u2 - u1))), ctx)?;
    let (e, d) = (c(u - half_u), c((u2 - u1 - 1.0) / 2.0));
    let (n1, d1, n2, d2) = match op {
        LocalOp::SigmaZ => (br::SQ_1, br::SQ_P, br::BR_1, br::BR_P),
        LocalOp::SigmaX => (br::DBR_1, br::DSQ_P, br::DSQ_1, br::DBR_P),
    };
    let t1 = bk(e, n1, ctx)? / bk_den(d, d1, ctx)?;
    let t2 = bk(e, n2, ctx)? / bk_den(d, d2, ctx)?;
    let value = pre * (nu1 as f64 * t1 + sector_sign(i) * t2);
    Ok(FFValue { value, quad_error: 0.0, params: echo })
}

#[allow(clippy::too_many_arguments)]
pub fn f2_sigma_z(u1: f64, u2: f64, nu1: i8, nu2: i8, i: usize, p: &FF2Params, ctx: &KernelContext) -> Result<FFValue> {
    f2(LocalOp::SigmaZ, u1, u2, nu1, nu2, i, p, ctx)
}

#[allow(clippy::too_many_arguments)]
pub fn f2_sigma_x(u1: f64, u2: f64, nu1: i8, nu2: i8, i: usize, p: &FF2Params, ctx: &KernelContext) -> Result<FFValue> {
    f2(LocalOp::SigmaX, u1, u2, nu1, nu2, i, p, ctx)
}

/// Every `ν ∈ {±1}^{len}` with `+` before `−` in lexicographic order.
pub fn spin_assignments(len: usize) -> Vec<Vec<i8>> {
    (0..1usize << len)
        .map(|bits| (0..len).map(|j| if bits >> (len - 1 - j) & 1 == 0 { 1 } else { -1 }).collect())
        .collect()
}

/// `Π_j ϑ[0; b_{ν_j}]((u_j − u0 + 1/2 + l − j + 1)/(2(r−1)); πi/(2ε(r−1)))`.
pub fn theta_product(nus: &[i8], l: C64, p: &FF2Params, ctx: &KernelContext) -> Result<C64> {
    let r = ctx.params.r;
    let tau = C64::new(0.0, PI / (2.0 * ctx.params.eps() * (r - 1.0)));
    let mut f = c(1.0);
    for (j, (&t, &nu)) in p.us.iter().zip(nus).enumerate() {
        let a = (t - p.u0 + 0.5 + l - j as f64) / (2.0 * (r - 1.0));
        f *= qseries::jacobi_theta(0.0, b_nu(nu), a, tau, &ctx.policy)?;
    }
    Ok(f)
}

/// Min-norm least-squares solve of a complex system through its real
/// embedding; returns the solution and the relative residual.
fn min_norm_solve(rows: &[Vec<C64>], rhs: &[C64], rcond: f64) -> Result<(Vec<C64>, f64)> {
    let (m, n) = (rows.len(), rows[0].len());
    let a = DMatrix::from_fn(2 * m, 2 * n, |i, j| {
        let z = rows[i % m][j % n];
        match (i < m, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let b = DVector::from_fn(2 * m, |i, _| if i < m { rhs[i].re } else { rhs[i - m].im });
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let sol = svd.solve(&b, rcond * smax).map_err(|e| Error::InvalidParams(e.into()))?;
    let res = (&a * &sol - &b).norm() / b.norm();
    Ok(((0..n).map(|j| C64::new(sol[j], sol[j + n])).collect(), res))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub nus: Vec<Vec<i8>>,
    pub values: Vec<C64>,
    pub residual: f64,
}

impl Extraction {
    /// Components divided by the largest one.
    pub fn normalized(&self) -> Vec<C64> {
        let k = argmax(&self.values);
        self.values.iter().map(|v| v / self.values[k]).collect()
    }
}

fn argmax(v: &[C64]) -> usize {
    (0..v.len()).fold(0, |b, k| if v[k].norm() > v[b].norm() { k } else { b })
}

/// Spin-basis components recovered from the face component at the labels `ls`.
pub fn extract_components(op: LocalOp, p: &FF2Params, ls: &[C64], contour: &ContourSpec, ctx: &KernelContext, exec: Exec) -> Result<Extraction> {
    let nus = spin_assignments(p.us.len());
    let mut rows = Vec::with_capacity(ls.len());
    let mut rhs = Vec::with_capacity(ls.len());
    for &l in ls {
        rows.push(nus.iter().map(|nu| theta_product(nu, l, p, ctx)).collect::<Result<Vec<_>>>()?);
        rhs.push(face_reduced(l, p, op, contour, ctx, exec)?.value);
    }
    let (values, residual) = min_norm_solve(&rows, &rhs, EXTRACT_RCOND)?;
    Ok(Extraction { nus, values, residual })
}

/// Complex labels spanning the period parallelogram of the theta products.
pub fn extraction_labels(count_re: usize, count_im: usize, base: f64, eps: f64) -> Vec<C64> {
    let mut ls = Vec::with_capacity(count_re * count_im);
    for a in 0..count_re {
        for b in 0..count_im {
            ls.push(C64::new(base + 0.37 * a as f64, PI / eps * 0.13 * b as f64));
        }
    }
    ls
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub m: usize,
    /// LHS/RHS for every (rapidity pair, l); empty for m = 2.
    pub ratios: Vec<C64>,
    pub fitted: C64,
    pub spread: f64,
    /// Largest deviation of normalized extracted components from the closed forms (m = 1).
    pub extraction_dev: f64,
    /// Largest deviation between extractions from two disjoint label sets.
    pub l_independence: f64,
    pub phase: C64,
    pub phase_modulus_dev: f64,
    pub phase_dev: f64,
}

/// Compares the spin-basis sum of closed forms against the face component
/// (m = 1), and checks l-independence of the extracted components (m = 1, 2).
#[allow(clippy::too_many_arguments)]
pub fn vertex_face_consistency(
    op: LocalOp,
    p: &FF2Params,
    l_samples: &[f64],
    grid: &[(f64, f64)],
    contour: &ContourSpec,
    ctx: &KernelContext,
    exec: Exec,
) -> Result<ConsistencyReport> {
    p.validate()?;
    let m = p.m();
    let phase = gathered_phase(p, ctx)?;
    let expected = expected_phase(m, ctx.params.r);
    let mut rep = ConsistencyReport {
        m,
        ratios: Vec::new(),
        fitted: c(1.0),
        spread: 0.0,
        extraction_dev: 0.0,
        l_independence: 0.0,
        phase,
        phase_modulus_dev: (phase.norm() - 1.0).abs(),
        phase_dev: (phase - expected).norm(),
    };
    let diff = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    match m {
        1 => {
            if l_samples.len() < 4 {
                return Err(Error::InvalidParams("m = 1 consistency needs at least 4 labels".into()));
            }
            let pts: Vec<(f64, f64)> = if grid.is_empty() { vec![(p.us[0], p.us[1])] } else { grid.to_vec() };
            let nus = spin_assignments(2);
            for &(u1, u2) in &pts {
                let q = p.with_rapidities(vec![u1, u2]);
                let closed = nus.iter().map(|nu| Ok(f2(op, u1, u2, nu[0], nu[1], p.sector, p, ctx)?.value)).collect::<Result<Vec<_>>>()?;
                for &l in l_samples {
                    let mut lhs = c(0.0);
                    for (nu, f) in nus.iter().zip(&closed) {
                        lhs += f * theta_product(nu, c(l), &q, ctx)?;
                    }
                    let rhs = face_reduced(c(l), &q, op, contour, ctx, exec)?.value;
                    rep.ratios.push(lhs / rhs);
                }
            }
            rep.fitted = rep.ratios.iter().sum::<C64>() / rep.ratios.len() as f64;
            rep.spread = rep.ratios.iter().map(|q| (q / rep.fitted - 1.0).norm()).fold(0.0, f64::max);

            let closed = nus.iter().map(|nu| Ok(f2(op, p.us[0], p.us[1], nu[0], nu[1], p.sector, p, ctx)?.value)).collect::<Result<Vec<_>>>()?;
            let k = argmax(&closed);
            let closed_n: Vec<C64> = closed.iter().map(|v| v / closed[k]).collect();
            let ls_a: Vec<C64> = l_samples.iter().map(|&l| c(l)).collect();
            let ls_b: Vec<C64> = l_samples.iter().map(|&l| c(l + 0.5)).collect();
            let ea = extract_components(op, p, &ls_a, contour, ctx, exec)?;
            let eb = extract_components(op, p, &ls_b, contour, ctx, exec)?;
            rep.extraction_dev = diff(&ea.normalized(), &closed_n);
            rep.l_independence = diff(&ea.normalized(), &eb.normalized());
        }
        2 => {
            let eps = ctx.params.eps();
            let ea = extract_components(op, p, &extraction_labels(6, 4, 0.3, eps), contour, ctx, exec)?;
            let eb = extract_components(op, p, &extraction_labels(6, 4, 0.45, eps), contour, ctx, exec)?;
            rep.l_independence = diff(&ea.normalized(), &eb.normalized());
        }
        _ => return Err(Error::InvalidParams(format!("consistency check covers m <= 2, got {m}"))),
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionEntry {
    pub nus: Vec<i8>,
    /// Magnitude relative to the largest component.
    pub magnitude: f64,
    pub allowed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub op: LocalOp,
    pub m: usize,
    pub entries: Vec<SelectionEntry>,
    pub max_forbidden: f64,
    pub residual: f64,
}

impl SelectionReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_forbidden < tol
    }
}

/// Magnitudes of every spin component: closed forms for m = 1, min-norm
/// extraction over complex labels for m = 2.
pub fn selection_rule_scan(op: LocalOp, m: usize, p: &FF2Params, contour: &ContourSpec, ctx: &KernelContext, exec: Exec) -> Result<SelectionReport> {
    p.validate()?;
    if p.m() != m {
        return Err(Error::InvalidParams(format!("m = {m} but {} rapidities given", p.us.len())));
    }
    let (nus, values, residual) = match m {
        1 => {
            let nus = spin_assignments(2);
            let vals = nus.iter().map(|nu| Ok(f2(op, p.us[0], p.us[1], nu[0], nu[1], p.sector, p, ctx)?.value)).collect::<Result<Vec<_>>>()?;
            (nus, vals, 0.0)
        }
        2 => {
            let e = extract_components(op, p, &extraction_labels(6, 4, 0.3, ctx.params.eps()), contour, ctx, exec)?;
            (e.nus, e.values, e.residual)
        }
        _ => return Err(Error::InvalidParams(format!("selection scan covers m <= 2, got {m}"))),
    };
    let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let entries: Vec<SelectionEntry> = nus
        .into_iter()
        .zip(&values)
        .map(|(nu, v)| SelectionEntry { allowed: selection_allowed(op, &nu), magnitude: v.norm() / scale, nus: nu })
        .collect();
    let max_forbidden = entries.iter().filter(|e| !e.allowed).map(|e| e.magnitude).fold(0.0, f64::max);
    Ok(SelectionReport { op, m, entries, max_forbidden, residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub values: Vec<C64>,
    pub radius_spread: f64,
    pub refinement: f64,
}

/// Face component at three radii and at N vs N/2 nodes.
pub fn contour_stability(p: &FF2Params, op: LocalOp, points: usize, ctx: &KernelContext, exec: Exec) -> Result<StabilityReport> {
    let rules = [RadiusRule::Interpolate(0.3), RadiusRule::GeometricMean, RadiusRule::Interpolate(0.7)];
    let vals = rules
        .iter()
        .map(|&rule| f_face_2m(p, op, &ContourSpec::new(rule, points), ctx, exec))
        .collect::<Result<Vec<_>>>()?;
    let base = vals[1].value;
    let radius_spread = vals.iter().map(|v| (v.value - base).norm() / base.norm()).fold(0.0, f64::max);
    let refinement = vals[1].quad_error / base.norm();
    Ok(StabilityReport { values: vals.into_iter().map(|v| v.value).collect(), radius_spread, refinement })
}
