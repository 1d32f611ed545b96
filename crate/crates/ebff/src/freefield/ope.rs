//! Contraction kernels of the basic operators `U`, `V`, `W` and the product
//! formulae they obey.
//!
//! A product `A(v)B(v′)` equals `prefactor(z) · K(w) · :A(v)B(v′):` with
//! `w = z′/z`. The kernel `K` comes from the oscillator commutators and is
//! returned as a truncated power series; the prefactor comes from the zero
//! modes and is kept symbolic as (sign, branch, exponent).

use std::fmt;

use super::bosonspec::{BosonSpec, Rescale, Weight};
use super::series::LaurentSeries;
use crate::exec::Exec;
use crate::qseries::{self, cpow, neg_pow, sign_r_pow, xpow, EllipticParams, TruncationPolicy};
use crate::{Error, Result, C64};

/// Parameters, truncation policy and the loaded boson table.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldContext {
    pub params: EllipticParams,
    pub policy: TruncationPolicy,
    pub spec: BosonSpec,
}

impl FieldContext {
    pub fn new(params: EllipticParams, spec: BosonSpec) -> Self {
        Self { params, policy: TruncationPolicy::default(), spec }
    }

    fn x(&self) -> f64 {
        self.params.x
    }

    fn xp(&self, a: f64) -> f64 {
        self.params.x.powf(a)
    }

    /// `(β₁, β₂, β₀)`, roots of `t² − β₀t − 1` with `β₀ = 1/√(r(r−1))`.
    pub fn betas(&self) -> (f64, f64, f64) {
        let r = self.params.r;
        let b1 = -((r - 1.0) / r).sqrt();
        let b2 = (r / (r - 1.0)).sqrt();
        (b1, b2, b1 + b2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Identity,
    UMinusAlpha,
    UOmega,
    VMinusAlpha,
    VOmega,
    WMinusAlpha,
}

/// A basic operator with its index `1 <= j <= n−1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexOpSymbol {
    pub kind: OpKind,
    pub j: usize,
}

impl fmt::Display for VertexOpSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let j = self.j;
        match self.kind {
            OpKind::Identity => write!(f, "1"),
            OpKind::UMinusAlpha => write!(f, "U_-a{j}"),
            OpKind::UOmega => write!(f, "U_w{j}"),
            OpKind::VMinusAlpha => write!(f, "V_-a{j}"),
            OpKind::VOmega => write!(f, "V_w{j}"),
            OpKind::WMinusAlpha => write!(f, "W_-a{j}"),
        }
    }
}

impl VertexOpSymbol {
    pub fn new(kind: OpKind, j: usize) -> Self {
        Self { kind, j }
    }

    pub fn identity() -> Self {
        Self { kind: OpKind::Identity, j: 0 }
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.kind != OpKind::Identity && (self.j == 0 || self.j >= n) {
            return Err(Error::RangeError(format!("{self}: index must lie in 1..={}", n - 1)));
        }
        Ok(())
    }

    /// Coefficients `c_i(m)` of `X^i_m z^{−m}` in the exponent.
    fn modes(&self, m: i64, x: f64) -> Vec<(usize, f64)> {
        let (j, mf) = (self.j, m as f64);
        let jf = j as f64;
        match self.kind {
            OpKind::Identity => vec![],
            OpKind::UMinusAlpha | OpKind::VMinusAlpha | OpKind::WMinusAlpha => {
                let s = if self.kind == OpKind::UMinusAlpha { 1.0 } else { -1.0 };
                let c = s * x.powf(-jf * mf) / mf;
                vec![(j, c), (j + 1, -c)]
            }
            OpKind::UOmega | OpKind::VOmega => {
                let s = if self.kind == OpKind::UOmega { -1.0 } else { 1.0 };
                (1..=j).map(|k| (k, s * x.powf((jf - 2.0 * k as f64 + 1.0) * mf) / mf)).collect()
            }
        }
    }

    fn rescale(&self, m: i64, ctx: &FieldContext) -> Result<f64> {
        let p = &ctx.params;
        match self.kind {
            OpKind::VMinusAlpha | OpKind::VOmega => ctx.spec.rescale(Rescale::A, m, p.x, p.r, p.n),
            OpKind::WMinusAlpha => ctx.spec.rescale(Rescale::O, m, p.x, p.r, p.n),
            _ => Ok(1.0),
        }
    }

    fn weight(&self) -> Weight {
        match self.kind {
            OpKind::Identity => Weight::Zero,
            OpKind::UOmega | OpKind::VOmega => Weight::Omega(self.j),
            _ => Weight::Alpha(self.j),
        }
    }

    /// Coefficient of `iQ_γ` in the exponent.
    fn beta(&self, ctx: &FieldContext) -> f64 {
        let (b1, b2, b0) = ctx.betas();
        match self.kind {
            OpKind::Identity => 0.0,
            OpKind::UMinusAlpha => -b1,
            OpKind::UOmega => b1,
            OpKind::VMinusAlpha => -b2,
            OpKind::VOmega => b2,
            OpKind::WMinusAlpha => -b0,
        }
    }

    fn branch(&self) -> Branch {
        match self.kind {
            OpKind::VMinusAlpha | OpKind::VOmega => Branch::NegZ,
            OpKind::WMinusAlpha => Branch::SignRZ,
            _ => Branch::Z,
        }
    }
}

/// Base of a zero-mode power.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `z^α = exp(α Log z)`.
    Z,
    /// `(−z)^α = exp(α(Log z + iπ))`.
    NegZ,
    /// `((−1)^r z)^α = exp(α(Log z + iπr))`.
    SignRZ,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Z => "z",
            Branch::NegZ => "-z",
            Branch::SignRZ => "(-1)^r z",
        })
    }
}

/// `sign · base^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prefactor {
    pub sign: f64,
    pub branch: Branch,
    pub exponent: f64,
}

impl Prefactor {
    pub fn eval(&self, z: C64, r: f64) -> C64 {
        let p = match self.branch {
            Branch::Z => cpow(z, self.exponent),
            Branch::NegZ => neg_pow(z, self.exponent),
            Branch::SignRZ => sign_r_pow(z, r, self.exponent),
        };
        p * self.sign
    }
}

/// Scalar data of a product `A(v)B(v′)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Contraction {
    pub prefactor: Prefactor,
    /// `Σ κ_m w^m`, the logarithm of the kernel.
    pub log_kernel: LaurentSeries,
    pub kernel: LaurentSeries,
}

/// `κ_m`, the coefficient of `w^m` in `log K(w)`.
fn kappa(a: &VertexOpSymbol, b: &VertexOpSymbol, m: i64, ctx: &FieldContext) -> Result<f64> {
    let p = &ctx.params;
    let sa = a.rescale(m, ctx)?;
    let sb = b.rescale(-m, ctx)?;
    let mut acc = 0.0;
    for (i, ci) in a.modes(m, p.x) {
        for (k, ck) in b.modes(-m, p.x) {
            acc += ci * ck * ctx.spec.commutator(i, k, m, p.x, p.r, p.n)?;
        }
    }
    Ok(acc * sa * sb)
}

/// Kernel and zero-mode prefactor of `A(v)B(v′)` through order `order` in `w`.
pub fn contraction_series(a: &VertexOpSymbol, b: &VertexOpSymbol, order: i64, ctx: &FieldContext) -> Result<Contraction> {
    if order < 1 {
        return Err(Error::InvalidParams(format!("series order must be >= 1, got {order}")));
    }
    a.check(ctx.params.n)?;
    b.check(ctx.params.n)?;
    let mut logk = vec![C64::new(0.0, 0.0)];
    for m in 1..=order {
        logk.push(C64::new(kappa(a, b, m, ctx)?, 0.0));
    }
    let log_kernel = LaurentSeries::from_coeffs(0, logk, order);
    let kernel = log_kernel.exp();
    let pairing = ctx.spec.pairing(a.weight(), b.weight(), ctx.params.n)?;
    let prefactor = Prefactor { sign: 1.0, branch: a.branch(), exponent: a.beta(ctx) * b.beta(ctx) * pairing };
    Ok(Contraction { prefactor, log_kernel, kernel })
}

/// Named kernel identities; `j` is the index of the non-fundamental
/// operator where it matters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    GStar(usize),
    VV1,
    VVa,
    Rho(usize),
    Lin,
    VU,
    W,
}

/// `(a, nomes, ±1)` meaning `(a w; nomes)_∞^{±1}`.
type Factor = (f64, Vec<f64>, i32);

impl Target {
    fn factors(&self, ctx: &FieldContext) -> Vec<Factor> {
        let (n, r) = (ctx.params.n as f64, ctx.params.r);
        let q = ctx.xp(2.0 * r - 2.0);
        match *self {
            Target::GStar(j) => {
                let j = j as f64;
                let nm = vec![q, ctx.xp(2.0 * n)];
                vec![
                    (ctx.xp(2.0 * n + 2.0 * r - j - 1.0), nm.clone(), 1),
                    (ctx.xp(j - 1.0), nm.clone(), 1),
                    (ctx.xp(2.0 * n - j - 1.0), nm.clone(), -1),
                    (ctx.xp(2.0 * r + j - 1.0), nm, -1),
                ]
            }
            Target::VV1 => vec![(ctx.xp(2.0 * r - 1.0), vec![q], 1), (1.0 / ctx.x(), vec![q], -1)],
            Target::VVa => vec![(1.0, vec![], 1), (ctx.xp(-2.0), vec![q], 1), (ctx.xp(2.0 * r), vec![q], -1)],
            Target::Rho(j) => {
                let j = j as f64;
                let nm = vec![ctx.xp(2.0), ctx.xp(2.0 * n)];
                vec![
                    (ctx.xp(2.0 * j + 1.0), nm.clone(), 1),
                    (ctx.xp(2.0 * n - 2.0 * j + 1.0), nm.clone(), 1),
                    (ctx.x(), nm.clone(), -1),
                    (ctx.xp(2.0 * n + 1.0), nm, -1),
                ]
            }
            Target::Lin => vec![(1.0, vec![], 1)],
            Target::VU => vec![(ctx.x(), vec![], -1), (1.0 / ctx.x(), vec![], -1)],
            Target::W => vec![(ctx.xp(r), vec![q], 1), (ctx.xp(r - 2.0), vec![q], -1)],
        }
    }

    /// The closed-form kernel at `w`.
    pub fn eval(&self, w: C64, ctx: &FieldContext) -> Result<C64> {
        let mut acc = C64::new(1.0, 0.0);
        for (a, nomes, p) in self.factors(ctx) {
            if p > 0 {
                acc *= qseries::pochr(w * a, &nomes, &ctx.policy)?;
            } else {
                acc /= qseries::pochr_den(w * a, &nomes, &ctx.policy, "OPE kernel")?;
            }
        }
        Ok(acc)
    }

    /// Logarithm of the kernel, using
    /// `log (a w; q⃗)_∞ = −Σ_m a^m w^m / (m Π_i (1 − q_i^m))`.
    pub fn log_series(&self, order: i64) -> impl Fn(&FieldContext) -> LaurentSeries + '_ {
        move |ctx| {
            let facs = self.factors(ctx);
            LaurentSeries::from_fn(order, |m| {
                let mf = m as f64;
                let t: f64 = facs
                    .iter()
                    .map(|(a, nomes, p)| {
                        let den: f64 = nomes.iter().map(|q| 1.0 - q.powi(m as i32)).product();
                        -(*p as f64) * a.powi(m as i32) / (mf * den)
                    })
                    .sum();
                C64::new(t, 0.0)
            })
        }
    }

    /// Expansion in `w` by multiplying out every factor `1 − a q^K w`.
    pub fn series(&self, order: i64, ctx: &FieldContext) -> Result<LaurentSeries> {
        let mut acc = LaurentSeries::one(order);
        for (a, nomes, p) in self.factors(ctx) {
            for c in product_points(a, &nomes, &ctx.policy)? {
                let f = if p > 0 {
                    LaurentSeries::from_coeffs(0, vec![C64::new(1.0, 0.0), C64::new(-c, 0.0)], order)
                } else {
                    LaurentSeries::from_coeffs(0, (0..=order).map(|i| C64::new(c.powi(i as i32), 0.0)).collect(), order)
                };
                acc = &acc * &f;
            }
        }
        Ok(acc)
    }
}

/// All `a q^K` above the tail tolerance.
fn product_points(a: f64, nomes: &[f64], policy: &TruncationPolicy) -> Result<Vec<f64>> {
    let mut pts = vec![a];
    for &q in nomes {
        let mut next = vec![];
        for &p in &pts {
            let mut c = p;
            let mut k = 0;
            while c.abs() > policy.tail_tol * a.abs().max(1.0) || k == 0 {
                next.push(c);
                c *= q;
                k += 1;
                if k > policy.max_terms {
                    return Err(Error::Overflow(policy.max_terms));
                }
            }
        }
        pts = next;
    }
    Ok(pts)
}

/// A product formula with its stated prefactor and kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredPair {
    pub a: VertexOpSymbol,
    pub b: VertexOpSymbol,
    pub target: Target,
    pub stated: Prefactor,
}

impl RegisteredPair {
    pub fn name(&self) -> String {
        format!("{} {}", self.a, self.b)
    }
}

/// Every product formula for `n`, each index `j` and neighbour `j ± 1`.
pub fn registered_pairs(n: usize, r: f64) -> Vec<RegisteredPair> {
    use OpKind::*;
    let op = VertexOpSymbol::new;
    let nf = n as f64;
    let kr = r / (r - 1.0);
    let pf = |sign: f64, branch, exponent| Prefactor { sign, branch, exponent };
    let mut out = vec![];
    for j in 1..n {
        let jf = j as f64;
        let cas = jf * (nf - jf) / nf;
        let mut add = |a, b, target, stated| out.push(RegisteredPair { a, b, target, stated });
        let gs = pf(1.0, Branch::NegZ, kr * (nf - jf) / nf);
        let vv = pf(1.0, Branch::NegZ, -kr);
        let w = pf(1.0, Branch::NegZ, -1.0 / (r - 1.0));
        let wneg = pf(-1.0, Branch::NegZ, -1.0 / (r - 1.0));
        add(op(VOmega, 1), op(VOmega, j), Target::GStar(j), gs);
        add(op(VOmega, j), op(VOmega, 1), Target::GStar(j), gs);
        add(op(VOmega, j), op(VMinusAlpha, j), Target::VV1, vv);
        add(op(VMinusAlpha, j), op(VOmega, j), Target::VV1, vv);
        add(op(VMinusAlpha, j), op(VMinusAlpha, j), Target::VVa, pf(1.0, Branch::NegZ, 2.0 * kr));
        add(op(VOmega, j), op(UOmega, j), Target::Rho(j), pf(1.0, Branch::NegZ, -cas));
        add(op(UOmega, j), op(VOmega, j), Target::Rho(j), pf(1.0, Branch::Z, -cas));
        add(op(VOmega, j), op(UMinusAlpha, j), Target::Lin, pf(-1.0, Branch::Z, 1.0));
        add(op(UOmega, j), op(VMinusAlpha, j), Target::Lin, pf(1.0, Branch::Z, 1.0));
        add(op(VMinusAlpha, j), op(UMinusAlpha, j), Target::VU, pf(1.0, Branch::Z, -2.0));
        add(op(UMinusAlpha, j), op(VMinusAlpha, j), Target::VU, pf(1.0, Branch::Z, -2.0));
        add(op(VOmega, j), op(WMinusAlpha, j), Target::W, w);
        add(op(WMinusAlpha, j), op(VOmega, j), Target::W, wneg);
        for jj in [j.wrapping_sub(1), j + 1] {
            if (1..n).contains(&jj) {
                add(op(VMinusAlpha, j), op(VMinusAlpha, jj), Target::VV1, vv);
                add(op(VMinusAlpha, j), op(UMinusAlpha, jj), Target::Lin, pf(-1.0, Branch::Z, 1.0));
                add(op(WMinusAlpha, j), op(VMinusAlpha, jj), Target::W, wneg);
                add(op(VMinusAlpha, jj), op(WMinusAlpha, j), Target::W, w);
            }
        }
    }
    out
}

/// Residuals of one product formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpeResidual {
    /// Max over `m` of `|κ_m − t_m| / max(1, |t_m|)`, with `t_m` the
    /// log-series coefficients of the stated kernel.
    pub kernel: f64,
    /// Relative mismatch of the zero-mode prefactor at sample points.
    pub prefactor: f64,
}

impl OpeResidual {
    pub fn max(&self) -> f64 {
        self.kernel.max(self.prefactor)
    }
}

fn prefactor_samples(x: f64) -> Vec<C64> {
    [C64::new(0.37, 0.21), C64::new(-0.6, 0.05), C64::new(1.3, -0.4), C64::new(0.1, 1.7)]
        .iter()
        .map(|&v| xpow(x, 2.0 * v))
        .collect()
}

/// Compare the contraction of `(a, b)` with its registered formula.
pub fn ope_check(a: &VertexOpSymbol, b: &VertexOpSymbol, order: i64, ctx: &FieldContext) -> Result<OpeResidual> {
    let reg = registered_pairs(ctx.params.n, ctx.params.r)
        .into_iter()
        .find(|p| p.a == *a && p.b == *b)
        .ok_or_else(|| Error::UnregisteredPair(format!("{a} {b}")))?;
    let got = contraction_series(a, b, order, ctx)?;
    let want = reg.target.log_series(order)(ctx);
    let kernel = got.log_kernel.max_rel_diff(&want);
    let r = ctx.params.r;
    let prefactor = prefactor_samples(ctx.x())
        .into_iter()
        .map(|z| {
            let s = reg.stated.eval(z, r);
            (got.prefactor.eval(z, r) - s).norm() / s.norm()
        })
        .fold(0.0, f64::max);
    Ok(OpeResidual { kernel, prefactor })
}

/// Every registered formula, in registration order.
pub fn ope_check_all(order: i64, ctx: &FieldContext, exec: Exec) -> Vec<(String, Result<OpeResidual>)> {
    let pairs = registered_pairs(ctx.params.n, ctx.params.r);
    exec.map(&pairs, |p| (p.name(), ope_check(&p.a, &p.b, order, ctx)))
}

/// Residuals of the delta-function commutator of `V_{−α_j}` and `U_{−α_j}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaReport {
    /// `[V, U]` kernel against the delta-function expansion, coefficientwise.
    pub commutator: f64,
    /// Prefactors of both orderings against `z^{−2}` and `z′^{−2}`.
    pub prefactor: f64,
}

/// `[V_{−α_j}(v), U_{−α_j}(v′)]` as a formal series in `w = z′/z`,
/// coefficients `−order−2 ..= order`, normalised by `z²`.
pub fn delta_commutator_check(j: usize, order: i64, ctx: &FieldContext) -> Result<DeltaReport> {
    if order < 2 {
        return Err(Error::InvalidParams(format!("order must be >= 2, got {order}")));
    }
    let v = VertexOpSymbol::new(OpKind::VMinusAlpha, j);
    let u = VertexOpSymbol::new(OpKind::UMinusAlpha, j);
    let vu = contraction_series(&v, &u, order, ctx)?;
    let uv = contraction_series(&u, &v, order, ctx)?;
    let x = ctx.x();
    // V(v)U(v′) is expanded in w; U(v′)V(v) in 1/w with prefactor z′^{−2} = z^{−2} w^{−2}.
    let lhs = |k: i64| vu.kernel.coeff(k) - uv.kernel.coeff(-k - 2);
    // (δ(z/xz′) − δ(z′/xz)) / ((x − 1/x) z z′) · z² = Σ_k (x^k − x^{−k}) w^{k−1} / (x − 1/x).
    let rhs = |k: i64| {
        let e = (k + 1) as f64;
        (x.powf(e) - x.powf(-e)) / (x - 1.0 / x)
    };
    let commutator = (-order - 2..=order)
        .map(|k| (lhs(k) - rhs(k)).norm() / rhs(k).abs().max(1.0))
        .fold(0.0, f64::max);
    let r = ctx.params.r;
    let zm2 = Prefactor { sign: 1.0, branch: Branch::Z, exponent: -2.0 };
    let prefactor = prefactor_samples(x)
        .into_iter()
        .map(|z| {
            let s = zm2.eval(z, r);
            ((vu.prefactor.eval(z, r) - s).norm() / s.norm()).max((uv.prefactor.eval(z, r) - s).norm() / s.norm())
        })
        .fold(0.0, f64::max);
    Ok(DeltaReport { commutator, prefactor })
}

/// Kernel magnitudes of the W–V products at the vanishing point and at a
/// generic point.
#[derive(Debug, Clone, PartialEq)]
pub struct NilpotencyReport {
    /// `(pair, |kernel(x^{−r})|)` for each W–V ordering.
    pub vanishing: Vec<(String, f64)>,
    /// Smallest `|kernel(w)|` over generic sample points.
    pub generic_min: f64,
}

impl NilpotencyReport {
    pub fn max_vanishing(&self) -> f64 {
        self.vanishing.iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }
}

/// `W(v + r/2)V(v)` and `V(v)W(v − r/2)` both sit at `w = x^{−r}`.
pub fn nilpotency_check(ctx: &FieldContext) -> Result<NilpotencyReport> {
    let (n, r) = (ctx.params.n, ctx.params.r);
    let w0 = C64::new(ctx.xp(-r), 0.0);
    let mut vanishing = vec![];
    let mut generic_min = f64::INFINITY;
    for p in registered_pairs(n, r).into_iter().filter(|p| p.target == Target::W) {
        vanishing.push((p.name(), p.target.eval(w0, ctx)?.norm()));
        for w in [C64::new(0.37, 0.1), C64::new(-1.4, 0.3), C64::new(2.2, -0.7)] {
            generic_min = generic_min.min(p.target.eval(w, ctx)?.norm());
        }
    }
    Ok(NilpotencyReport { vanishing, generic_min })
}

/// Scalars by which the zero modes act on a Fock space `F_{l,k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroModeState {
    pub k: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    pub g_k: C64,
    pub g_l_prime: C64,
    /// Spectral shift carried by the second tail-operator representation.
    pub delta_u: f64,
}

impl ZeroModeState {
    /// From the components `k_μ`, `l_μ` in the `ε_μ` basis.
    pub fn new(k: &[f64], l: &[f64], params: &EllipticParams, policy: &TruncationPolicy) -> Result<Self> {
        let n = params.n;
        if k.len() != n || l.len() != n {
            return Err(Error::InvalidParams(format!("weights need {n} components")));
        }
        let r = params.r;
        let diff = |v: &[f64]| -> Vec<Vec<f64>> { (0..n).map(|a| (0..n).map(|b| v[a] - v[b]).collect()).collect() };
        let kk = diff(k);
        let ll = diff(l);
        let pi: Vec<Vec<f64>> =
            (0..n).map(|a| (0..n).map(|b| r * ll[a][b] - (r - 1.0) * kk[a][b]).collect()).collect();
        let mut g_k = C64::new(1.0, 0.0);
        let mut g_l_prime = C64::new(1.0, 0.0);
        for a in 0..n {
            for b in a + 1..n {
                g_k *= qseries::bracket(C64::new(kk[a][b], 0.0), qseries::br::SQ, params, policy)?;
                g_l_prime *= qseries::bracket(C64::new(ll[a][b], 0.0), qseries::br::SQ_P, params, policy)?;
            }
        }
        Ok(Self { k: kk, l: ll, pi, g_k, g_l_prime, delta_u: -((n - 1) as f64) / 2.0 })
    }
}
