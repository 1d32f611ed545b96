//! Corner transfer matrix Hamiltonians on vertex and face paths, the path
//! partition function and the free-boson trace.

use nalgebra::DMatrix;

use crate::exec::Exec;
use crate::freefield::{BosonSpec, Rescale};
use crate::lattice::HeightState;
use crate::qseries::{self, br, EllipticParams, TruncationPolicy};
use crate::{Error, Result, C64};

/// Local energy `H_v(μ, ν)`.
pub fn h_v(mu: usize, nu: usize, n: usize) -> Result<i64> {
    if mu >= n || nu >= n {
        return Err(Error::RangeError(format!("H_v({mu}, {nu}) with n = {n}")));
    }
    let (mu, nu, n) = (mu as i64, nu as i64, n as i64);
    Ok(if nu < mu { mu - nu - 1 } else { n - 1 + mu - nu })
}

/// Exact fraction `num/den`, kept in lowest terms with `den > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: i64,
    pub den: i64,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Ratio {
    pub fn new(num: i64, den: i64) -> Self {
        let g = gcd(num, den).max(1) * den.signum();
        Self { num: num / g, den: den / g }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn wrap(v: i64, n: usize) -> usize {
    v.rem_euclid(n as i64) as usize
}

/// Spin path `μ_1, μ_2, …` in sector `i`; beyond the stored entries the
/// tail `μ_j = i+1−j (mod n)` is implied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexPath {
    n: usize,
    sector: usize,
    entries: Vec<usize>,
}

impl VertexPath {
    pub fn new(n: usize, sector: usize, entries: Vec<usize>) -> Result<Self> {
        if n < 2 || sector >= n || entries.iter().any(|&e| e >= n) {
            return Err(Error::RangeError(format!("vertex path entries must lie in 0..{n}")));
        }
        Ok(Self { n, sector, entries })
    }

    pub fn ground(n: usize, sector: usize, len: usize) -> Result<Self> {
        let entries = (1..=len).map(|j| wrap(sector as i64 + 1 - j as i64, n)).collect();
        Self::new(n, sector, entries)
    }

    pub fn tail(&self, j: usize) -> usize {
        wrap(self.sector as i64 + 1 - j as i64, self.n)
    }

    /// `μ_j`, 1-based.
    pub fn get(&self, j: usize) -> usize {
        self.entries.get(j - 1).copied().unwrap_or_else(|| self.tail(j))
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }
}

/// `(1/n) Σ_{j ≤ J} j H_v(μ_j, μ_{j+1})`; the entries past `J` must follow
/// the tail.
pub fn h_ctm_vertex(path: &VertexPath, depth: usize) -> Result<Ratio> {
    if (depth + 1..=path.entries.len()).any(|j| path.get(j) != path.tail(j)) {
        return Err(Error::TailMismatch(depth));
    }
    let mut e = 0;
    for j in 1..=depth {
        e += j as i64 * h_v(path.get(j), path.get(j + 1), path.n)?;
    }
    Ok(Ratio::new(e, path.n as i64))
}

/// `ξ + ω_k`, with `ω_k = ε̄_0 + … + ε̄_{k−1}` and `k` taken mod n.
pub fn omega_shift(xi: &HeightState, k: i64) -> HeightState {
    let k = wrap(k, xi.n());
    (0..k).fold(xi.clone(), |h, mu| h.step(mu))
}

/// Height path `a_0, a_1, …` with boundary `ξ` and sector `i`; beyond the
/// stored heights `a_j = ξ + ω_{i+1−j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FacePath {
    xi: HeightState,
    sector: usize,
    heights: Vec<HeightState>,
}

impl FacePath {
    pub fn new(xi: HeightState, sector: usize, heights: Vec<HeightState>) -> Result<Self> {
        let n = xi.n();
        if sector >= n || heights.is_empty() {
            return Err(Error::RangeError("face path needs a sector below n and a_0".into()));
        }
        let p = Self { xi, sector, heights };
        for j in 0..p.heights.len() {
            p.step_at(j + 1)?;
        }
        Ok(p)
    }

    /// Ground path of length `len + 1`.
    pub fn ground(xi: HeightState, sector: usize, len: usize) -> Result<Self> {
        let heights = (0..=len).map(|j| omega_shift(&xi, sector as i64 + 1 - j as i64)).collect();
        Self::new(xi, sector, heights)
    }

    /// Path through `a_0` whose steps `a_{j−1} − a_j = ε̄_{μ_j}` follow the
    /// given labels, then the tail. Fails unless it lands on the tail.
    pub fn from_steps(xi: HeightState, sector: usize, steps: &[usize]) -> Result<Self> {
        let n = xi.n();
        let len = steps.len();
        let end = omega_shift(&xi, sector as i64 + 1 - len as i64);
        let mut heights = vec![end];
        for &mu in steps.iter().rev() {
            if mu >= n {
                return Err(Error::RangeError(format!("step {mu} with n = {n}")));
            }
            let next = heights.last().unwrap().step(mu);
            heights.push(next);
        }
        heights.reverse();
        Self::new(xi, sector, heights)
    }

    pub fn tail(&self, j: usize) -> HeightState {
        omega_shift(&self.xi, self.sector as i64 + 1 - j as i64)
    }

    /// `a_j`, 0-based.
    pub fn get(&self, j: usize) -> HeightState {
        self.heights.get(j).cloned().unwrap_or_else(|| self.tail(j))
    }

    pub fn heights(&self) -> &[HeightState] {
        &self.heights
    }

    /// Label `μ` of the step `a_{j−1} = a_j + ε̄_μ`.
    pub fn step_at(&self, j: usize) -> Result<usize> {
        self.get(j)
            .step_to(&self.get(j - 1))
            .ok_or_else(|| Error::NonAdmissible(format!("a_{} - a_{j} is not a unit step", j - 1)))
    }
}

/// `H_f(a+ε̄_μ+ε̄_ν, a+ε̄_μ, a) = H_v(ν, μ)`.
pub fn h_f(a_pp: &HeightState, a_p: &HeightState, a: &HeightState) -> Result<i64> {
    let mu = a.step_to(a_p).ok_or_else(|| Error::NonAdmissible("second height is not a unit step up".into()))?;
    let nu = a_p.step_to(a_pp).ok_or_else(|| Error::NonAdmissible("first height is not a unit step up".into()))?;
    h_v(nu, mu, a.n())
}

/// `(1/n) Σ_{j ≤ J} j H_f(a_{j−1}, a_j, a_{j+1})`; heights from `a_J` on
/// must follow the tail.
pub fn h_ctm_face(path: &FacePath, depth: usize) -> Result<Ratio> {
    if (depth..path.heights.len()).any(|j| !path.heights[j].approx_eq(&path.tail(j))) {
        return Err(Error::TailMismatch(depth));
    }
    let mut e = 0;
    for j in 1..=depth {
        e += j as i64 * h_f(&path.get(j - 1), &path.get(j), &path.get(j + 1))?;
    }
    Ok(Ratio::new(e, path.xi.n() as i64))
}

/// Knobs of the energy-bounded path enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumConfig {
    /// Paths with weight below `tol` are dropped.
    pub tol: f64,
    /// Maximum number of retained paths.
    pub budget: usize,
    pub exec: Exec,
}

impl Default for EnumConfig {
    fn default() -> Self {
        Self { tol: 1e-16, budget: 5_000_000, exec: Exec::default() }
    }
}

/// Truncated `Tr x^{2n H_CTM}` over sector `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiResult {
    pub value: f64,
    pub paths: usize,
}

#[derive(Clone, Copy)]
struct Node {
    /// Next position to fill, counting down to 1; 0 means complete.
    j: usize,
    /// `μ_{j+1}`.
    next: usize,
    /// `Σ_{k > j} k H_v(μ_k, μ_{k+1})`.
    energy: i64,
}

fn children(node: Node, n: usize, e_max: f64) -> impl Iterator<Item = Node> {
    (0..n).filter_map(move |mu| {
        let energy = node.energy + node.j as i64 * h_v(mu, node.next, n).ok()?;
        (energy as f64 <= e_max).then_some(Node { j: node.j - 1, next: mu, energy })
    })
}

fn dfs(root: Node, n: usize, e_max: f64, x: f64, budget: usize) -> (f64, usize) {
    let mut stack = vec![root];
    let (mut sum, mut count) = (0.0, 0);
    while let Some(node) = stack.pop() {
        if node.j == 0 {
            sum += x.powf(2.0 * node.energy as f64);
            count += 1;
            if count > budget {
                break;
            }
            continue;
        }
        stack.extend(children(node, n, e_max));
    }
    (sum, count)
}

/// Sum of `x^{2 Σ j H_v}` over paths `μ_1 … μ_J` followed by the tail,
/// skipping every branch whose partial energy already exceeds the weight
/// cutoff.
pub fn chi_partition(i: usize, depth: usize, params: &EllipticParams, cfg: &EnumConfig) -> Result<ChiResult> {
    let n = params.n;
    if i >= n {
        return Err(Error::RangeError(format!("sector {i} with n = {n}")));
    }
    if !(cfg.tol > 0.0 && cfg.tol < 1.0) {
        return Err(Error::InvalidParams(format!("tolerance {} outside (0, 1)", cfg.tol)));
    }
    let x = params.x;
    let e_max = cfg.tol.ln() / (2.0 * x.ln());
    let root = Node { j: depth, next: wrap(i as i64 - depth as i64, n), energy: 0 };
    // Fixed-depth split so that the summation order never depends on threads.
    let mut frontier = vec![root];
    for _ in 0..depth.min(3) {
        frontier = frontier.into_iter().flat_map(|nd| children(nd, n, e_max)).collect();
    }
    let parts = cfg.exec.map(&frontier, |&nd| dfs(nd, n, e_max, x, cfg.budget));
    let paths: usize = parts.iter().map(|p| p.1).sum();
    if paths > cfg.budget {
        return Err(Error::CombinatorialBlowup(cfg.budget));
    }
    Ok(ChiResult { value: parts.iter().map(|p| p.0).sum(), paths })
}

/// `(x⁴;x⁴)_∞ / (x²;x²)_∞`, the n = 2 character.
pub fn chi_closed_form_n2(x: f64, policy: &TruncationPolicy) -> Result<f64> {
    let a = qseries::pochr(C64::new(x.powi(4), 0.0), &[x.powi(4)], policy)?;
    let b = qseries::pochr(C64::new(x * x, 0.0), &[x * x], policy)?;
    Ok((a / b).re)
}

/// `G_a = Π_{μ<ν} [a_{μν}]`.
pub fn g_a(a: &HeightState, params: &EllipticParams, policy: &TruncationPolicy) -> Result<C64> {
    let n = a.n();
    let mut g = C64::new(1.0, 0.0);
    for mu in 0..n {
        for nu in mu + 1..n {
            g *= qseries::bracket(C64::new(a.a(mu, nu), 0.0), br::SQ, params, policy)?;
        }
    }
    Ok(g)
}

/// Boundary weights and oscillator truncation of a Fock space `F_{l,k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockSpec {
    pub l: HeightState,
    pub k: HeightState,
    pub modes: usize,
    pub bosons: BosonSpec,
}

impl FockSpec {
    pub fn new(l: HeightState, k: HeightState, modes: usize, bosons: BosonSpec) -> Result<Self> {
        if modes < 1 {
            return Err(Error::InvalidParams("mode cutoff must be >= 1".into()));
        }
        if l.n() != k.n() {
            return Err(Error::InvalidParams("l and k have different rank".into()));
        }
        Ok(Self { l, k, modes, bosons })
    }

    /// Smallest `M` with `x^{2nM} < tol`.
    pub fn modes_for(x: f64, n: usize, tol: f64) -> usize {
        (tol.ln() / (2.0 * n as f64 * x.ln())).floor() as usize + 1
    }
}

/// Trace of `x^{2n H_F} G_a` and the closed form it should equal.
#[derive(Debug, Clone, PartialEq)]
pub struct FockTrace {
    pub oscillator: f64,
    pub zero_mode: f64,
    pub g_a: C64,
    pub value: C64,
    pub closed_form: C64,
    /// `|value − closed_form| / |closed_form|`.
    pub rel_error: f64,
    /// Largest `|λ − m|` over the mode-m spectra of `ad H_F`.
    pub spectrum_dev: f64,
    /// Largest `|ad H_F(constraint)|` relative to the matrix scale.
    pub constraint_residual: f64,
    pub convention: String,
}

/// Matrix of `ad H_F` on the span of `B^1_{−m} … B^n_{−m}`.
fn mode_matrix(m: i64, spec: &BosonSpec, params: &EllipticParams) -> Result<DMatrix<f64>> {
    let (n, r, x) = (params.n, params.r, params.x);
    let s = spec.rescale(Rescale::A, m, x, r, n)?;
    let mf = m as f64;
    // H_F restricted to mode m is Σ M_{ab} B^a_{−m} B^b_m.
    let mut hm = DMatrix::<f64>::zeros(n, n);
    for j in 1..n {
        for k in 1..=j {
            let c = s * x.powf((2.0 * k as f64 - 2.0 * j as f64 - 1.0) * mf);
            hm[(k - 1, j - 1)] += c;
            hm[(k - 1, j)] -= c;
        }
    }
    let mut comm = DMatrix::<f64>::zeros(n, n);
    for b in 1..=n {
        for c in 1..=n {
            comm[(b - 1, c - 1)] = spec.commutator(b, c, m, x, r, n)?;
        }
    }
    Ok(hm * comm)
}

fn centered(h: &HeightState) -> Vec<f64> {
    let mean = h.abar().iter().sum::<f64>() / h.n() as f64;
    h.abar().iter().map(|v| v - mean).collect()
}

/// Oscillator part from the per-mode spectra of `ad H_F`, zero-mode part from
/// `½ Σ_j P_{ω_j} P_{α_j}` on `|l, k⟩`; compared against
/// `x^{n|β₁k+β₂l|²} / (x^{2n};x^{2n})^{n−1}_∞ · G_a`.
pub fn fock_trace(
    spec: &FockSpec,
    params: &EllipticParams,
    a: Option<&HeightState>,
    policy: &TruncationPolicy,
) -> Result<FockTrace> {
    let (n, r, x) = (params.n, params.r, params.x);
    if spec.l.n() != n {
        return Err(Error::InvalidParams(format!("weights have rank {}, expected {n}", spec.l.n())));
    }
    let nf = n as f64;
    let mut log_osc = 0.0;
    let mut spectrum_dev: f64 = 0.0;
    let mut constraint_residual: f64 = 0.0;
    for m in 1..=spec.modes as i64 {
        let full = mode_matrix(m, &spec.bosons, params)?;
        let scale = full.amax().max(f64::MIN_POSITIVE);
        let reduced = match (1..=n).map(|j| spec.bosons.constraint_weight(j, -m, x, r, n)).collect::<Option<Vec<_>>>() {
            Some(c) => {
                let c = nalgebra::DVector::from_vec(c);
                constraint_residual = constraint_residual.max((&full * &c).amax() / (scale * c.amax()));
                let cn = c[n - 1];
                let mut q = DMatrix::<f64>::zeros(n - 1, n - 1);
                for i in 0..n - 1 {
                    let y = full.column(i).clone_owned();
                    let y = &y - &c * (y[n - 1] / cn);
                    for row in 0..n - 1 {
                        q[(row, i)] = y[row];
                    }
                }
                q
            }
            None => full,
        };
        for lam in reduced.complex_eigenvalues().iter() {
            if lam.re <= 0.0 || lam.im.abs() > 1e-8 * lam.norm() {
                return Err(Error::BadCommutators(format!("mode {m} eigenvalue {lam}")));
            }
            spectrum_dev = spectrum_dev.max((lam.re - m as f64).abs());
            log_osc -= (1.0 - x.powf(2.0 * nf * lam.re)).ln();
        }
    }
    let oscillator = log_osc.exp();

    let fp = FieldBetas::new(r);
    let (kc, lc) = (centered(&spec.k), centered(&spec.l));
    let p: Vec<f64> = kc.iter().zip(&lc).map(|(k, l)| fp.b1 * k + fp.b2 * l).collect();
    let mut hz = 0.0;
    for j in 1..n {
        let omega: f64 = p[..j].iter().sum();
        let alpha = p[j - 1] - p[j];
        hz += 0.5 * omega * alpha;
    }
    let zero_mode = x.powf(2.0 * nf * hz);

    let g = match a {
        Some(a) => g_a(a, params, policy)?,
        None => C64::new(1.0, 0.0),
    };
    let value = g * oscillator * zero_mode;
    let norm2: f64 = p.iter().map(|v| v * v).sum();
    let q = x.powf(2.0 * nf);
    let pq = qseries::pochr(C64::new(q, 0.0), &[q], policy)?.re;
    let closed_form = g * x.powf(nf * norm2) / pq.powi(n as i32 - 1);
    Ok(FockTrace {
        oscillator,
        zero_mode,
        g_a: g,
        value,
        closed_form,
        rel_error: (value - closed_form).norm() / closed_form.norm(),
        spectrum_dev,
        constraint_residual,
        convention: spec.bosons.convention(),
    })
}

/// `β₁ < 0 < β₂`, the roots of `t² − β₀t − 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldBetas {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
}

impl FieldBetas {
    pub fn new(r: f64) -> Self {
        let b0 = 1.0 / (r * (r - 1.0)).sqrt();
        let d = (b0 * b0 + 4.0).sqrt();
        Self { b0, b1: (b0 - d) / 2.0, b2: (b0 + d) / 2.0 }
    }
}
