//! Belavin R-matrix, A^(1)_{n−1} face weights and theta-function
//! intertwining vectors, with residual checks for the relations tying them
//! together.
//!
//! Heights are real vectors `ā` with `Σ ā_μ` arbitrary; a step by `ε̄_μ`
//! adds `δ_{μν} − 1/n` to `ā_ν`. Lattice heights are the special case of
//! integer offsets from a reference weight.

use crate::error::{Error, Result};
use crate::kernels::{self, KernelContext};
use crate::qseries::{self, BracketFamily, TruncationPolicy};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

const STEP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct HeightState {
    abar: Vec<f64>,
}

impl HeightState {
    pub fn new(abar: Vec<f64>) -> Result<Self> {
        if abar.len() < 2 {
            return Err(Error::InvalidParams("height needs n >= 2 components".into()));
        }
        Ok(Self { abar })
    }

    /// `ā = base + Σ_μ offsets_μ ε̄_μ`.
    pub fn from_offsets(base: &[f64], offsets: &[i64]) -> Result<Self> {
        if base.len() != offsets.len() {
            return Err(Error::InvalidParams("offset length differs from rank".into()));
        }
        let mut h = Self::new(base.to_vec())?;
        for (mu, &k) in offsets.iter().enumerate() {
            for _ in 0..k.unsigned_abs() {
                h = if k > 0 { h.step(mu) } else { h.step_down(mu) };
            }
        }
        Ok(h)
    }

    pub fn n(&self) -> usize {
        self.abar.len()
    }

    pub fn abar(&self) -> &[f64] {
        &self.abar
    }

    /// `a_{μν} = ā_μ − ā_ν`.
    pub fn a(&self, mu: usize, nu: usize) -> f64 {
        self.abar[mu] - self.abar[nu]
    }

    /// `a + ε̄_μ`.
    pub fn step(&self, mu: usize) -> Self {
        self.shifted(mu, 1.0)
    }

    /// `a − ε̄_μ`.
    pub fn step_down(&self, mu: usize) -> Self {
        self.shifted(mu, -1.0)
    }

    fn shifted(&self, mu: usize, s: f64) -> Self {
        let n = self.n() as f64;
        let abar = self
            .abar
            .iter()
            .enumerate()
            .map(|(nu, &v)| v + s * (if nu == mu { 1.0 } else { 0.0 } - 1.0 / n))
            .collect();
        Self { abar }
    }

    /// The `μ` with `other = self + ε̄_μ`, if any.
    pub fn step_to(&self, other: &HeightState) -> Option<usize> {
        let n = self.n();
        (0..n).find(|&mu| {
            (0..n).all(|nu| {
                let e = if nu == mu { 1.0 } else { 0.0 } - 1.0 / n as f64;
                (other.abar[nu] - self.abar[nu] - e).abs() < STEP_TOL
            })
        })
    }

    pub fn approx_eq(&self, other: &HeightState) -> bool {
        self.abar.iter().zip(&other.abar).all(|(a, b)| (a - b).abs() < STEP_TOL)
    }
}

/// Vertex weights indexed `(i,k; j,l)`, stored as an `n² × n²` matrix with
/// row `i·n+k` and column `j·n+l`.
#[derive(Debug, Clone, PartialEq)]
pub struct RTensor {
    pub n: usize,
    pub m: DMatrix<C64>,
}

impl RTensor {
    pub fn get(&self, i: usize, k: usize, j: usize, l: usize) -> C64 {
        self.m[(i * self.n + k, j * self.n + l)]
    }

    /// Largest entry violating `i + k ≡ j + l (mod n)`.
    pub fn charge_violation(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for (i, k, j, l) in quad(n) {
            if (i + k + 2 * n - j - l) % n != 0 {
                worst = worst.max(self.get(i, k, j, l).norm());
            }
        }
        worst
    }

    /// Largest deviation from `R^{i+p,k+p}_{j+p,l+p} = R^{ik}_{jl}`.
    pub fn shift_violation(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for (i, k, j, l) in quad(n) {
            for p in 1..n {
                let s = |a: usize| (a + p) % n;
                worst = worst.max((self.get(s(i), s(k), s(j), s(l)) - self.get(i, k, j, l)).norm());
            }
        }
        worst
    }

    /// Entries with modulus above `tol · max|R|`.
    pub fn nonzero_count(&self, tol: f64) -> usize {
        let scale = self.m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        self.m.iter().filter(|z| z.norm() > tol * scale).count()
    }

    pub fn max_abs_diff(&self, other: &RTensor) -> f64 {
        (&self.m - &other.m).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn quad(n: usize) -> impl Iterator<Item = (usize, usize, usize, usize)> {
    (0..n * n * n * n).map(move |t| (t / (n * n * n), (t / (n * n)) % n, (t / n) % n, t % n))
}

fn kron(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)).collect()
}

/// Face model, vertex model and intertwiners at one level.
///
/// [`Lattice::new`] works at level `r`. [`Lattice::primed`] works at level
/// `r − 1` with `W′ = −W|_{r↦r−1}` and `t′ = f′(v)·t(v; ε, r−1)`, so that
/// [`Lattice::build_r`] yields `S(v) = −R(v)|_{r↦r−1}`.
#[derive(Debug, Clone)]
pub struct Lattice {
    n: usize,
    level: f64,
    x: f64,
    policy: TruncationPolicy,
    sign: f64,
    gauge: Option<KernelContext>,
    bases: Vec<HeightState>,
    v2: f64,
}

impl Lattice {
    pub fn new(ctx: &KernelContext) -> Self {
        Self::at_level(ctx, ctx.params.r, 1.0, None)
    }

    pub fn primed(ctx: &KernelContext) -> Self {
        Self::at_level(ctx, ctx.params.r - 1.0, -1.0, Some(*ctx))
    }

    fn at_level(ctx: &KernelContext, level: f64, sign: f64, gauge: Option<KernelContext>) -> Self {
        let n = ctx.params.n;
        // generic construction heights: irrational fractions keep every a_{μν} off the zero lattice
        let bases = [0.618_033_988_75, 0.414_213_562_37, 0.732_050_807_57]
            .iter()
            .enumerate()
            .map(|(s, &g)| {
                let abar = (0..n).map(|mu| 0.37 + 0.29 * s as f64 + ((mu as f64 + 1.0) * g).fract() * level).collect();
                HeightState { abar }
            })
            .collect();
        Self {
            n,
            level,
            x: ctx.params.x,
            policy: ctx.policy,
            sign,
            gauge,
            bases,
            v2: 0.2,
        }
    }

    /// Override the construction heights used by [`Lattice::build_r`].
    pub fn with_base(mut self, base: HeightState) -> Self {
        self.bases = vec![base];
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    fn sq(&self, v: C64) -> Result<C64> {
        qseries::bracket_at(v, BracketFamily::Square, self.level, self.x, &self.policy)
    }

    fn sq_den(&self, v: f64) -> Result<C64> {
        let b = self.sq(C64::new(v, 0.0))?;
        if b.norm() < qseries::POLE_TOL {
            return Err(Error::PoleHit(format!("[{v}] vanishes at level {}", self.level)));
        }
        Ok(b)
    }

    fn check_rank(&self, hs: &[&HeightState]) -> Result<()> {
        if hs.iter().any(|h| h.n() != self.n) {
            return Err(Error::InvalidParams(format!("height rank differs from n = {}", self.n)));
        }
        Ok(())
    }

    /// `W[c d; b a | v]` with `a_{μν}` taken at `a`. Zero unless all four
    /// edges `(a,b), (a,d), (b,c), (d,c)` are single steps.
    pub fn face_weight(&self, c: &HeightState, d: &HeightState, b: &HeightState, a: &HeightState, v: C64) -> Result<C64> {
        self.check_rank(&[a, b, c, d])?;
        let (Some(m1), Some(m2), Some(m3), Some(m4)) = (a.step_to(b), a.step_to(d), b.step_to(c), d.step_to(c)) else {
            return Ok(C64::new(0.0, 0.0));
        };
        let w = if m1 == m2 && m3 == m4 && m1 == m3 {
            self.sq(1.0 + v)? / self.sq_den(1.0)?
        } else if m1 == m2 {
            let amn = a.a(m1, m3);
            self.sq(amn - v)? / self.sq_den(amn)?
        } else if m1 == m4 && m2 == m3 {
            let amn = a.a(m1, m2);
            self.sq(v)? * self.sq(C64::new(amn + 1.0, 0.0))? / (self.sq_den(1.0)? * self.sq_den(amn)?)
        } else {
            return Ok(C64::new(0.0, 0.0));
        };
        Ok(self.sign * w)
    }

    fn gauge_factor(&self, v: C64) -> Result<C64> {
        match &self.gauge {
            Some(ctx) => kernels::f_prime(v, ctx),
            None => Ok(C64::new(1.0, 0.0)),
        }
    }

    /// `t(v)^{lo+ε̄_μ}_{lo}`.
    pub fn t_from(&self, v: C64, lo: &HeightState, mu: usize) -> Result<Vec<C64>> {
        self.check_rank(&[lo])?;
        let n = self.n as f64;
        let eps = -self.x.ln();
        let tau = C64::new(0.0, PI / (eps * self.level));
        let mut g = self.gauge_factor(v)?;
        for nu in 0..self.n {
            if nu != mu {
                g /= self.sq_den(lo.a(mu, nu))?;
            }
        }
        (0..self.n)
            .map(|k| {
                let arg = (v - n * lo.abar[mu]) / (n * self.level);
                Ok(g * qseries::jacobi_theta(0.0, k as f64 / n, arg, tau / n, &self.policy)?)
            })
            .collect()
    }

    /// `t(v)^{a}_{a−ε̄_μ}`.
    pub fn intertwiner(&self, v: C64, a: &HeightState, mu: usize) -> Result<Vec<C64>> {
        self.t_from(v, &a.step_down(mu), mu)
    }

    fn t_matrix(&self, v: C64, hi: &HeightState) -> Result<DMatrix<C64>> {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        for nu in 0..n {
            let col = self.intertwiner(v, hi, nu)?;
            for k in 0..n {
                m[(k, nu)] = col[k];
            }
        }
        Ok(m)
    }

    fn t_inverse(&self, v: C64, hi: &HeightState) -> Result<DMatrix<C64>> {
        let m = self.t_matrix(v, hi)?;
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let det = m.determinant();
        if !(det.norm() > 1e-13 * scale.powi(self.n as i32)) {
            return Err(Error::SingularHeight(format!("intertwiner matrix singular at {:?}", hi.abar)));
        }
        m.try_inverse().ok_or_else(|| Error::SingularHeight(format!("{:?}", hi.abar)))
    }

    /// Dual covector `t*(v)^{a−ε̄_μ}_{a}`: row `μ` of the inverse of the matrix
    /// whose columns are `t(v)^a_{a−ε̄_ν}`.
    pub fn dual_intertwiner(&self, v: C64, a: &HeightState, mu: usize) -> Result<Vec<C64>> {
        let inv = self.t_inverse(v, a)?;
        Ok((0..self.n).map(|k| inv[(mu, k)]).collect())
    }

    /// Both inversion identities at height `a`; returns the max deviation
    /// from the identity matrix.
    pub fn dual_inversion_residual(&self, v: C64, a: &HeightState) -> Result<f64> {
        let n = self.n;
        let mut worst = 0.0f64;
        let ts: Vec<Vec<C64>> = (0..n).map(|mu| self.intertwiner(v, a, mu)).collect::<Result<_>>()?;
        let ds: Vec<Vec<C64>> = (0..n).map(|mu| self.dual_intertwiner(v, a, mu)).collect::<Result<_>>()?;
        for nu in 0..n {
            for nu2 in 0..n {
                // Σ_μ t*_μ(v)^{a−ε̄_ν}_a t^μ(v)^a_{a−ε̄_ν′} = δ
                let s: C64 = (0..n).map(|k| ds[nu][k] * ts[nu2][k]).sum();
                let want = if nu == nu2 { 1.0 } else { 0.0 };
                worst = worst.max((s - want).norm());
            }
        }
        for k in 0..n {
            for k2 in 0..n {
                // Σ_ν t^μ(v)^a_{a−ε̄_ν} t*_{μ′}(v)^{a−ε̄_ν}_a = δ^μ_{μ′}
                let s: C64 = (0..n).map(|nu| ts[nu][k] * ds[nu][k2]).sum();
                let want = if k == k2 { 1.0 } else { 0.0 };
                worst = worst.max((s - want).norm());
            }
        }
        Ok(worst)
    }

    /// Right-hand side of the vertex-face relation for the path
    /// `a → a+ε̄_μ → a+ε̄_μ+ε̄_ν`.
    fn wtt(&self, a: &HeightState, mu: usize, nu: usize, v1: C64, v2: C64) -> Result<Vec<C64>> {
        let n = self.n;
        let d = a.step(mu);
        let c = d.step(nu);
        let mut acc = vec![C64::new(0.0, 0.0); n * n];
        for rho in 0..n {
            let b = a.step(rho);
            let Some(s) = b.step_to(&c) else { continue };
            let w = self.face_weight(&c, &d, &b, a, v1 - v2)?;
            if w.norm() == 0.0 {
                continue;
            }
            let col = kron(&self.t_from(v1, &b, s)?, &self.t_from(v2, a, rho)?);
            for (o, x) in acc.iter_mut().zip(col) {
                *o += w * x;
            }
        }
        Ok(acc)
    }

    /// `R(v)` from `R(v1−v2) t(v1)^d_a ⊗ t(v2)^c_d = Σ_b W[c d; b a|v1−v2] t(v1)^c_b ⊗ t(v2)^b_a`,
    /// solved in least squares over the construction heights.
    pub fn build_r(&self, v: C64) -> Result<RTensor> {
        let n = self.n;
        let nn = n * n;
        let v2 = C64::new(self.v2, 0.0);
        let v1 = v + v2;
        let cols = nn * self.bases.len();
        // R·L = Rr, solved as Lᵀ·Rᵀ = Rrᵀ
        let mut lt = DMatrix::zeros(cols, nn);
        let mut rt = DMatrix::zeros(cols, nn);
        for (s, a) in self.bases.iter().enumerate() {
            for mu in 0..n {
                for nu in 0..n {
                    let d = a.step(mu);
                    let col = kron(&self.t_from(v1, a, mu)?, &self.t_from(v2, &d, nu)?);
                    let rhs = self.wtt(a, mu, nu, v1, v2)?;
                    let k = s * nn + mu * n + nu;
                    for row in 0..nn {
                        lt[(k, row)] = col[row];
                        rt[(k, row)] = rhs[row];
                    }
                }
            }
        }
        let qr = lt.qr();
        let (q, rmat) = (qr.q(), qr.r());
        let diag: Vec<f64> = (0..nn).map(|i| rmat[(i, i)].norm()).collect();
        let dmax = diag.iter().cloned().fold(0.0, f64::max);
        let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(dmin > 1e-13 * dmax) {
            return Err(Error::SingularHeight("intertwiner products are degenerate at every construction height".into()));
        }
        let sol = rmat
            .solve_upper_triangular(&(q.adjoint() * rt))
            .ok_or_else(|| Error::SingularHeight("triangular solve failed".into()))?;
        Ok(RTensor { n, m: sol.transpose() })
    }

    /// Relative residual of the vertex-face relation at an arbitrary height.
    pub fn vertex_face_residual(&self, r: &RTensor, a: &HeightState, v1: C64, v2: C64) -> Result<f64> {
        let n = self.n;
        let mut worst = 0.0f64;
        for mu in 0..n {
            for nu in 0..n {
                let d = a.step(mu);
                let col = kron(&self.t_from(v1, a, mu)?, &self.t_from(v2, &d, nu)?);
                let lhs = &r.m * DMatrix::from_column_slice(n * n, 1, &col);
                let rhs = self.wtt(a, mu, nu, v1, v2)?;
                let scale = rhs.iter().map(|z| z.norm()).fold(1.0, f64::max);
                let diff = lhs.iter().zip(&rhs).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
                worst = worst.max(diff / scale);
            }
        }
        Ok(worst)
    }

    /// Relative residual of
    /// `t*(v1)^b_c ⊗ t*(v2)^a_b R(v1−v2) = Σ_d W[c d; b a|v1−v2] t*(v1)^a_d ⊗ t*(v2)^d_c`.
    pub fn dual_relation_residual(&self, r: &RTensor, a: &HeightState, v1: C64, v2: C64) -> Result<f64> {
        let n = self.n;
        let mut worst = 0.0f64;
        for mu in 0..n {
            for nu in 0..n {
                let b = a.step(mu);
                let c = b.step(nu);
                let row = kron(&self.dual_intertwiner(v1, &c, nu)?, &self.dual_intertwiner(v2, &b, mu)?);
                let lhs = DMatrix::from_row_slice(1, n * n, &row) * &r.m;
                let mut rhs = vec![C64::new(0.0, 0.0); n * n];
                for rho in 0..n {
                    let d = a.step(rho);
                    let Some(s) = d.step_to(&c) else { continue };
                    let w = self.face_weight(&c, &d, &b, a, v1 - v2)?;
                    if w.norm() == 0.0 {
                        continue;
                    }
                    let k = kron(&self.dual_intertwiner(v1, &d, rho)?, &self.dual_intertwiner(v2, &c, s)?);
                    for (o, x) in rhs.iter_mut().zip(k) {
                        *o += w * x;
                    }
                }
                let scale = rhs.iter().map(|z| z.norm()).fold(1.0, f64::max);
                let diff = lhs.iter().zip(&rhs).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
                worst = worst.max(diff / scale);
            }
        }
        Ok(worst)
    }

    /// `R12(v1−v2) R13(v1) R23(v2) − R23(v2) R13(v1) R12(v1−v2)`, max-norm
    /// relative to the largest entry.
    pub fn ybe_residual(&self, v1: C64, v2: C64) -> Result<f64> {
        let n = self.n;
        let a = self.build_r(v1 - v2)?.m;
        let b = self.build_r(v1)?.m;
        let c = self.build_r(v2)?.m;
        let id = DMatrix::<C64>::identity(n, n);
        let mut p = DMatrix::<C64>::zeros(n * n, n * n);
        for i in 0..n {
            for k in 0..n {
                p[(i * n + k, k * n + i)] = C64::new(1.0, 0.0);
            }
        }
        let r12 = |m: &DMatrix<C64>| m.kronecker(&id);
        let r23 = |m: &DMatrix<C64>| id.kronecker(m);
        let p23 = id.kronecker(&p);
        let r13 = |m: &DMatrix<C64>| &p23 * r12(m) * &p23;
        let lhs = r12(&a) * r13(&b) * r23(&c);
        let rhs = r23(&c) * r13(&b) * r12(&a);
        let scale = lhs.iter().map(|z| z.norm()).fold(1e-300, f64::max);
        Ok((lhs - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale)
    }

    /// Star-triangle relation `X1(u)X2(u+w)X1(w) = X2(w)X1(u+w)X2(u)` on all
    /// three-step paths from `a0`.
    pub fn face_ybe_residual(&self, a0: &HeightState, u: C64, w: C64) -> Result<f64> {
        let n = self.n;
        let mut worst = 0.0f64;
        let mut seen = std::collections::BTreeSet::new();
        for t in 0..n * n * n {
            let mut ms = [t / (n * n), (t / n) % n, t % n];
            ms.sort_unstable();
            if !seen.insert(ms) {
                continue;
            }
            let mut paths: Vec<[usize; 3]> = Vec::new();
            for perm in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
                let p = [ms[perm[0]], ms[perm[1]], ms[perm[2]]];
                if !paths.contains(&p) {
                    paths.push(p);
                }
            }
            let heights = |p: &[usize; 3]| {
                let mut hs = vec![a0.clone()];
                for &s in p {
                    let next = hs.last().unwrap().step(s);
                    hs.push(next);
                }
                hs
            };
            let hp: Vec<Vec<HeightState>> = paths.iter().map(heights).collect();
            let np = paths.len();
            let x_op = |i: usize, v: C64| -> Result<DMatrix<C64>> {
                let mut m = DMatrix::zeros(np, np);
                for k in 0..np {
                    for l in 0..np {
                        let same = (0..4).filter(|&t| t != i).all(|t| hp[k][t].approx_eq(&hp[l][t]));
                        if same {
                            m[(k, l)] = self.face_weight(&hp[k][i + 1], &hp[l][i], &hp[k][i], &hp[k][i - 1], v)?;
                        }
                    }
                }
                Ok(m)
            };
            let lhs = x_op(1, u)? * x_op(2, u + w)? * x_op(1, w)?;
            let rhs = x_op(2, w)? * x_op(1, u + w)? * x_op(2, u)?;
            let scale = lhs.iter().map(|z| z.norm()).fold(1.0, f64::max);
            worst = worst.max((lhs - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale);
        }
        Ok(worst)
    }

    /// `L = Σ_μ t*_μ(−u)^{a1}_{a0} t^μ(−u)^{a′0}_{a′1}`; zero when either edge
    /// is not a single step.
    pub fn l_block(&self, u: C64, a0p: &HeightState, a1p: &HeightState, a0: &HeightState, a1: &HeightState) -> Result<C64> {
        let (Some(s), Some(sp)) = (a1.step_to(a0), a1p.step_to(a0p)) else {
            return Ok(C64::new(0.0, 0.0));
        };
        let d = self.dual_intertwiner(-u, a0, s)?;
        let t = self.t_from(-u, a1p, sp)?;
        Ok(d.iter().zip(&t).map(|(p, q)| p * q).sum())
    }

    /// Truncated tail `Π_{j<J} L(u; a′_j, a′_{j+1}, a_j, a_{j+1})`.
    pub fn tail_truncated(&self, u: C64, path: &[HeightState], path2: &[HeightState], depth: usize) -> Result<C64> {
        if path.len() < depth + 1 || path2.len() < depth + 1 {
            return Err(Error::InvalidParams(format!("paths shorter than depth {depth}")));
        }
        for j in depth..path.len().min(path2.len()) {
            if !path[j].approx_eq(&path2[j]) {
                return Err(Error::TailMismatch(j));
            }
        }
        if path.len() != path2.len() {
            return Err(Error::TailMismatch(path.len().min(path2.len())));
        }
        let mut acc = C64::new(1.0, 0.0);
        for j in 0..depth {
            acc *= self.l_block(u, &path2[j], &path2[j + 1], &path[j], &path[j + 1])?;
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qseries::EllipticParams;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx(n: usize) -> KernelContext {
        KernelContext::new(EllipticParams::new(n, 3.3, 0.4).unwrap())
    }

    fn rand_height(rng: &mut ChaCha8Rng, n: usize) -> HeightState {
        HeightState::new((0..n).map(|_| rng.random_range(0.0..3.0)).collect()).unwrap()
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn height_algebra() {
        let h = HeightState::new(vec![0.3, 1.1, 2.0]).unwrap();
        assert!((h.a(0, 1) + h.a(1, 0)).abs() < 1e-15);
        assert!((h.a(0, 1) + h.a(1, 2) - h.a(0, 2)).abs() < 1e-15);
        let s = h.step(1);
        assert_eq!(h.step_to(&s), Some(1));
        assert_eq!(s.step_to(&h), None);
        assert!((s.a(1, 0) - h.a(1, 0) - 1.0).abs() < 1e-15);
        let o = HeightState::from_offsets(&[0.3, 1.1, 2.0], &[1, 0, -1]).unwrap();
        assert!(o.approx_eq(&h.step(0).step_down(2)));
    }

    #[test]
    fn face_weight_vanishing_and_v0() {
        let lat = Lattice::new(&ctx(2));
        let a = HeightState::new(vec![0.4, 1.9]).unwrap();
        let far = a.step(0).step(0);
        assert_eq!(lat.face_weight(&far, &a.step(1), &a.step(0), &a, c(0.3)).unwrap(), c(0.0));
        for mu in 0..2 {
            for nu in 0..2 {
                let b = a.step(mu);
                let cc = b.step(nu);
                for rho in 0..2 {
                    let d = a.step(rho);
                    if d.step_to(&cc).is_none() {
                        continue;
                    }
                    let w = lat.face_weight(&cc, &d, &b, &a, c(0.0)).unwrap();
                    let want = if b.approx_eq(&d) { 1.0 } else { 0.0 };
                    assert!((w - want).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn n2_intertwiner_components_are_half_characteristic_thetas() {
        let k = ctx(2);
        let lat = Lattice::new(&k);
        let lo = HeightState::new(vec![0.6, 1.7]).unwrap();
        let v = C64::new(0.33, 0.1);
        let t = lat.t_from(v, &lo, 0).unwrap();
        let tau = C64::new(0.0, PI / (k.params.eps() * k.params.r));
        let arg = (v - 2.0 * 0.6) / (2.0 * k.params.r);
        let pol = TruncationPolicy::default();
        let g = qseries::bracket(c(lo.a(0, 1)), qseries::br::SQ, &k.params, &pol).unwrap();
        // direct bilateral sums with characteristic b = 0 and 1/2
        for (comp, b) in [(0usize, 0.0), (1, 0.5)] {
            let want: C64 = (-40..=40)
                .map(|m| {
                    let m = m as f64;
                    (C64::new(0.0, PI) * m * (m * tau / 2.0 + 2.0 * (arg + b))).exp()
                })
                .sum::<C64>()
                / g;
            assert!((t[comp] - want).norm() < 1e-12 * want.norm());
        }
    }

    #[test]
    fn eight_vertex_structure() {
        let lat = Lattice::new(&ctx(2));
        let r = lat.build_r(c(0.3)).unwrap();
        assert_eq!(r.nonzero_count(1e-9), 8);
        assert!(r.charge_violation() < 1e-12);
        assert!(r.shift_violation() < 1e-12);
    }

    #[test]
    fn r_independent_of_construction_height() {
        for n in [2, 3] {
            let k = ctx(n);
            let lat = Lattice::new(&k);
            let other = Lattice::new(&k).with_base(HeightState::new((0..n).map(|m| 0.9 + 0.77 * m as f64).collect()).unwrap());
            let a = lat.build_r(c(0.3)).unwrap();
            let b = other.build_r(c(0.3)).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-11, "n={n}");
        }
    }

    #[test]
    fn lattice_relations_n2_n3() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2, 3] {
            let k = ctx(n);
            for lat in [Lattice::new(&k), Lattice::primed(&k)] {
                let a = rand_height(&mut rng, n);
                let (v1, v2) = (c(rng.random_range(0.1..0.9)), c(rng.random_range(0.0..0.5)));
                let r = lat.build_r(v1 - v2).unwrap();
                assert!(r.charge_violation() < 1e-12);
                assert!(lat.vertex_face_residual(&r, &a, v1, v2).unwrap() < 1e-9);
                assert!(lat.dual_relation_residual(&r, &a, v1, v2).unwrap() < 1e-9);
                assert!(lat.dual_inversion_residual(v1, &a).unwrap() < 1e-10);
                assert!(lat.ybe_residual(v1, v2).unwrap() < 1e-9);
                assert!(lat.face_ybe_residual(&a, v1, v2).unwrap() < 1e-9);
            }
        }
    }

    #[test]
    fn primed_is_minus_r_at_r_minus_1() {
        let k = ctx(2);
        let s = Lattice::primed(&k).build_r(c(0.35)).unwrap();
        let k1 = KernelContext::new(EllipticParams::new(2, 2.3, 0.4).unwrap());
        let r = Lattice::new(&k1).build_r(c(0.35)).unwrap();
        let sum = (&s.m + &r.m).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(sum < 1e-11, "{sum}");
        let a = HeightState::new(vec![0.2, 1.4]).unwrap();
        let w1 = Lattice::primed(&k).face_weight(&a.step(0).step(1), &a.step(1), &a.step(0), &a, c(0.3)).unwrap();
        let w2 = Lattice::new(&k1).face_weight(&a.step(0).step(1), &a.step(1), &a.step(0), &a, c(0.3)).unwrap();
        assert!((w1 + w2).norm() < 1e-14);
    }

    #[test]
    fn l_block_cases() {
        let k = ctx(2);
        let lat = Lattice::new(&k);
        let a0 = HeightState::new(vec![0.5, 1.6]).unwrap();
        let u = c(0.27);
        for s in 0..2 {
            let a1 = a0.step_down(s);
            assert!((lat.l_block(u, &a0, &a1, &a0, &a1).unwrap() - 1.0).norm() < 1e-12);
        }
        let off = lat.l_block(u, &a0, &a0.step_down(1), &a0, &a0.step_down(0)).unwrap();
        assert!(off.norm() < 1e-12);
        assert_eq!(lat.l_block(u, &a0, &a0.step(0).step(0), &a0, &a0.step_down(0)).unwrap(), c(0.0));
        // brute-force μ-sum at random heights
        let (hi, hip) = (HeightState::new(vec![0.1, 2.2]).unwrap(), HeightState::new(vec![0.9, 1.3]).unwrap());
        let got = lat.l_block(u, &hip, &hip.step_down(1), &hi, &hi.step_down(0)).unwrap();
        let d = lat.dual_intertwiner(-u, &hi, 0).unwrap();
        let t = lat.intertwiner(-u, &hip, 1).unwrap();
        assert!((got - (d[0] * t[0] + d[1] * t[1])).norm() < 1e-14);
    }

    #[test]
    fn tail_mismatch_detected() {
        let lat = Lattice::new(&ctx(2));
        let a = HeightState::new(vec![0.5, 1.6]).unwrap();
        let p: Vec<HeightState> = (0..5).map(|j| if j % 2 == 0 { a.clone() } else { a.step_down(0) }).collect();
        let mut q = p.clone();
        q[4] = a.step(0).step(0);
        assert_eq!(lat.tail_truncated(c(0.2), &p, &q, 2), Err(Error::TailMismatch(4)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn shift_and_charge_at_random_v(v in 0.05f64..0.95, vi in -0.2f64..0.2) {
            let lat = Lattice::new(&ctx(3));
            let r = lat.build_r(C64::new(v, vi)).unwrap();
            prop_assert!(r.charge_violation() < 1e-12);
            prop_assert!(r.shift_violation() < 1e-11);
        }
    }
}
