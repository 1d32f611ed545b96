//! Registered checks. Each returns its parameter echo and named residuals;
//! the report passes when the largest residual is within the threshold.

use std::collections::BTreeMap;
use std::time::Instant;

use ebff::ctm::{self, EnumConfig, FacePath, FockSpec};
use ebff::formfactor::{self, FF2Params};
use ebff::freefield::{self, FieldContext};
use ebff::kernels::{self, LocalOp};
use ebff::lattice::{HeightState, Lattice};
use ebff::qseries::{self, br};
use ebff::{Exec, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

/// Every registered check, sorted by name.
pub const CHECKS: [&str; 17] = [
    "bracket-parity",
    "chi-partition",
    "contour-stability",
    "delta-commutator",
    "dual-inversion",
    "face-ybe",
    "ff-consistency",
    "fock-trace",
    "kernel-unitarity",
    "ksum",
    "nilpotency",
    "ope",
    "selection-rules",
    "tail-delta",
    "theta-oracle",
    "vertex-face",
    "ybe",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub check: String,
    pub seed: u64,
    pub params: BTreeMap<String, Value>,
    pub residuals: BTreeMap<String, f64>,
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

struct Outcome {
    params: BTreeMap<String, Value>,
    residuals: BTreeMap<String, f64>,
}

impl Outcome {
    fn new(cfg: &RunConfig, n: usize) -> Self {
        let mut params = BTreeMap::new();
        params.insert("n".into(), json!(n));
        params.insert("r".into(), json!(cfg.r));
        params.insert("x".into(), json!(cfg.x));
        params.insert("tail_tol".into(), json!(cfg.tail_tol));
        params.insert("max_terms".into(), json!(cfg.max_terms));
        Self { params, residuals: BTreeMap::new() }
    }

    fn param(mut self, key: &str, v: Value) -> Self {
        self.params.insert(key.into(), v);
        self
    }

    fn residual(mut self, key: &str, v: f64) -> Self {
        self.residuals.insert(key.into(), v);
        self
    }
}

type CheckResult = Result<Outcome, CliError>;

fn rng_for(cfg: &RunConfig, name: &str) -> ChaCha8Rng {
    let idx = CHECKS.iter().position(|c| *c == name).unwrap_or(0) as u64;
    ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(idx))
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn theta_oracle(cfg: &RunConfig) -> CheckResult {
    let mut rng = rng_for(cfg, "theta-oracle");
    let pol = cfg.policy()?;
    let samples = cfg.samples.max(200);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let q = C64::from_polar(rng.random_range(0.05..0.8), rng.random_range(-3.1..3.1));
        let s = q.norm().sqrt();
        let z = C64::from_polar(rng.random_range(s..1.0 / s), rng.random_range(-3.1..3.1));
        let got = qseries::theta_big(z, q, &pol)?;
        let want: C64 = (-400i32..=400).map(|k| q.powf((k * (k - 1)) as f64 / 2.0) * (-z).powi(k)).sum();
        worst = worst.max((got - want).norm() / want.norm());
    }
    Ok(Outcome::new(cfg, 0).param("samples", json!(samples)).residual("triple_vs_bilateral", worst))
}

fn bracket_parity(cfg: &RunConfig) -> CheckResult {
    let mut rng = rng_for(cfg, "bracket-parity");
    let (p, pol) = (cfg.params_n(2)?, cfg.policy()?);
    let (mut odd, mut shift) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let v = C64::new(rng.random_range(-2.0..2.0), rng.random_range(-0.5..0.5));
        let b = qseries::bracket(v, br::SQ, &p, &pol)?;
        odd = odd.max((qseries::bracket(-v, br::SQ, &p, &pol)? + b).norm() / b.norm());
        shift = shift.max((qseries::bracket(v + p.r, br::SQ, &p, &pol)? + b).norm() / b.norm());
    }
    Ok(Outcome::new(cfg, 2).param("samples", json!(100)).residual("odd", odd).residual("shift_r", shift))
}

fn kernel_unitarity(cfg: &RunConfig) -> CheckResult {
    let mut rng = rng_for(cfg, "kernel-unitarity");
    let k = cfg.kernel_ctx(cfg.n)?;
    let (mut r, mut rs, mut chi) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..cfg.samples {
        let v = C64::new(rng.random_range(-0.45..0.45), rng.random_range(-0.3..0.3));
        for j in 1..=cfg.n {
            r = r.max((kernels::g_and_r(j, v, &k)?.1 * kernels::g_and_r(j, -v, &k)?.1 - 1.0).norm());
            rs = rs.max((kernels::gstar_and_rstar(j, v, &k)?.1 * kernels::gstar_and_rstar(j, -v, &k)?.1 - 1.0).norm());
            chi = chi.max((kernels::chi_j(j, v, &k)? * kernels::chi_j(j, -v, &k)? - 1.0).norm());
        }
    }
    let k2 = cfg.kernel_ctx(2)?;
    let x4 = cfg.x.powi(4);
    let mut fpsi = 0.0f64;
    for _ in 0..cfg.samples {
        let z = C64::from_polar(rng.random_range(0.2..1.0) * cfg.x * cfg.x, rng.random_range(-3.0..3.0));
        let a = kernels::f_psipsi(z, &k2)?;
        fpsi = fpsi.max((a - kernels::f_psipsi(x4 / z, &k2)?).norm() / a.norm().max(1.0));
    }
    Ok(Outcome::new(cfg, cfg.n)
        .param("samples", json!(cfg.samples))
        .param("branch", json!(qseries::NEG_POW_BRANCH))
        .residual("r", r)
        .residual("rstar", rs)
        .residual("chi", chi)
        .residual("f_psipsi_reflection", fpsi))
}

fn random_height(rng: &mut ChaCha8Rng, n: usize) -> Result<HeightState, CliError> {
    Ok(HeightState::new((0..n).map(|_| rng.random_range(0.0..3.0)).collect())?)
}

/// Ten random (v1, v2, a) draws on both the plain and the primed lattice.
fn lattice_check<F>(cfg: &RunConfig, name: &str, mut f: F) -> CheckResult
where
    F: FnMut(&Lattice, &HeightState, C64, C64) -> Result<Vec<(&'static str, f64)>, ebff::Error>,
{
    let mut rng = rng_for(cfg, name);
    let k = cfg.kernel_ctx(cfg.n)?;
    let mut out = Outcome::new(cfg, cfg.n).param("draws", json!(10));
    for (label, lat) in [("", Lattice::new(&k)), ("primed_", Lattice::primed(&k))] {
        for _ in 0..10 {
            let a = random_height(&mut rng, cfg.n)?;
            let v1 = c(rng.random_range(0.1..0.9));
            let v2 = c(rng.random_range(0.0..0.5));
            for (key, val) in f(&lat, &a, v1, v2)? {
                let e = out.residuals.entry(format!("{label}{key}")).or_insert(0.0);
                *e = e.max(val);
            }
        }
    }
    Ok(out)
}

fn ybe(cfg: &RunConfig) -> CheckResult {
    lattice_check(cfg, "ybe", |lat, _, v1, v2| Ok(vec![("ybe", lat.ybe_residual(v1, v2)?)]))
}

fn face_ybe(cfg: &RunConfig) -> CheckResult {
    lattice_check(cfg, "face-ybe", |lat, a, v1, v2| Ok(vec![("face_ybe", lat.face_ybe_residual(a, v1, v2)?)]))
}

fn vertex_face(cfg: &RunConfig) -> CheckResult {
    lattice_check(cfg, "vertex-face", |lat, a, v1, v2| {
        let r = lat.build_r(v1 - v2)?;
        Ok(vec![("rtt_wtt", lat.vertex_face_residual(&r, a, v1, v2)?), ("dual_relation", lat.dual_relation_residual(&r, a, v1, v2)?)])
    })
}

fn dual_inversion(cfg: &RunConfig) -> CheckResult {
    lattice_check(cfg, "dual-inversion", |lat, a, v1, _| Ok(vec![("dual_inversion", lat.dual_inversion_residual(v1, a)?)]))
}

fn tail_delta(cfg: &RunConfig) -> CheckResult {
    let k = cfg.kernel_ctx(cfg.n)?;
    let lat = Lattice::new(&k);
    let xi = HeightState::new((0..cfg.n).map(|mu| 0.31 + 1.46 * mu as f64).collect())?;
    let u = c(0.27);
    let tail = |depth: usize| -> Result<C64, ebff::Error> {
        let path = FacePath::ground(xi.clone(), 0, depth + 3)?;
        lat.tail_truncated(u, path.heights(), path.heights(), depth)
    };
    let j = cfg.tail_depth;
    let dev = (tail(j)? - 1.0).norm();
    // excess of the J-increment over the bound 10·x^{2J}
    let mut excess = 0.0f64;
    for d in 2..j {
        let step = (tail(d + 1)? - tail(d)?).norm();
        excess = excess.max(step - 10.0 * cfg.x.powi(2 * d as i32));
    }
    Ok(Outcome::new(cfg, cfg.n).param("depth", json!(j)).residual("lambda_minus_one", dev).residual("increment_excess", excess.max(0.0)))
}

fn chi_partition(cfg: &RunConfig) -> CheckResult {
    if cfg.n != 2 {
        return Err(CliError::Precondition(format!("chi-partition compares against the n = 2 closed form, got n = {}", cfg.n)));
    }
    let p = cfg.params()?;
    let want = ctm::chi_closed_form_n2(cfg.x, &cfg.policy()?)?;
    let enum_cfg = EnumConfig { exec: cfg.exec(), ..EnumConfig::default() };
    let mut out = Outcome::new(cfg, 2).param("depth", json!(cfg.chi_depth)).param("closed_form", json!(want));
    for i in 0..2 {
        let got = ctm::chi_partition(i, cfg.chi_depth, &p, &enum_cfg)?;
        out = out.residual(&format!("sector_{i}"), (got.value - want).abs() / want);
    }
    Ok(out)
}

fn fock_trace(cfg: &RunConfig) -> CheckResult {
    let n = cfg.n;
    let l = HeightState::new((0..n).map(|k| 0.37 * k as f64 + 0.1).collect())?;
    let k = HeightState::new((0..n).map(|k| -0.21 * (k * k) as f64).collect())?;
    let modes = FockSpec::modes_for(cfg.x, n, 1e-14);
    let bosons = cfg.bosons()?;
    let label = bosons.label().to_string();
    let spec = FockSpec::new(l, k, modes, bosons)?;
    let t = ctm::fock_trace(&spec, &cfg.params()?, None, &cfg.policy()?)?;
    Ok(Outcome::new(cfg, n)
        .param("modes", json!(modes))
        .param("boson_spec", json!(label))
        .residual("closed_form", t.rel_error)
        .residual("spectrum", t.spectrum_dev)
        .residual("constraint", t.constraint_residual))
}

fn field_ctx(cfg: &RunConfig) -> Result<FieldContext, CliError> {
    let mut f = FieldContext::new(cfg.params()?, cfg.bosons()?);
    f.policy = cfg.policy()?;
    Ok(f)
}

fn ope(cfg: &RunConfig) -> CheckResult {
    let ctx = field_ctx(cfg)?;
    let mut out = Outcome::new(cfg, cfg.n).param("order", json!(cfg.ope_order));
    for (name, res) in freefield::ope_check_all(cfg.ope_order, &ctx, cfg.exec()) {
        out = out.residual(&name, res?.max());
    }
    Ok(out)
}

fn delta_commutator(cfg: &RunConfig) -> CheckResult {
    let ctx = field_ctx(cfg)?;
    let mut out = Outcome::new(cfg, cfg.n).param("order", json!(cfg.ope_order));
    for j in 1..cfg.n {
        let d = freefield::delta_commutator_check(j, cfg.ope_order, &ctx)?;
        out = out.residual(&format!("j{j}_commutator"), d.commutator).residual(&format!("j{j}_prefactor"), d.prefactor);
    }
    Ok(out)
}

fn nilpotency(cfg: &RunConfig) -> CheckResult {
    let ctx = field_ctx(cfg)?;
    let rep = freefield::nilpotency_check(&ctx)?;
    let mut out = Outcome::new(cfg, cfg.n).param("generic_min", json!(rep.generic_min));
    for (name, v) in rep.vanishing {
        out = out.residual(&name, v);
    }
    Ok(out)
}

fn ksum(cfg: &RunConfig) -> CheckResult {
    let mut rng = rng_for(cfg, "ksum");
    let k = cfg.kernel_ctx(2)?;
    let mut worst = 0.0f64;
    for draw in 0..cfg.samples {
        let l = rng.random_range(0.0..3.0);
        let (u, u0) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let (us, vs) = if draw % 2 == 0 {
            (vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)], vec![])
        } else {
            let us: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            (us, vec![C64::new(rng.random_range(0.0..1.0), rng.random_range(-0.2..0.2))])
        };
        worst = worst.max(formfactor::zero_mode_sum_check(draw % 2, l, u, u0, &us, &vs, 16, &k)?.rel);
    }
    Ok(Outcome::new(cfg, 2).param("draws", json!(cfg.samples)).param("k_max", json!(16)).residual("direct_vs_closed", worst))
}

fn ff_point(cfg: &RunConfig, us: Vec<f64>, sector: usize) -> Result<FF2Params, CliError> {
    Ok(FF2Params::new(cfg.params_n(2)?, 0.3, 0.05, 0.7, sector, us)?)
}

fn ff_echo(out: Outcome, p: &FF2Params) -> Outcome {
    out.param("u", json!(p.u)).param("u0", json!(p.u0)).param("u_list", json!(p.us))
}

fn ff_consistency(cfg: &RunConfig) -> CheckResult {
    let k = cfg.kernel_ctx(2)?;
    let grid: Vec<(f64, f64)> = [0.05, 0.15, 0.25, 0.35, 0.45].iter().flat_map(|&a| [0.4, 0.5, 0.6, 0.7, 0.8].map(|b| (a, b))).collect();
    let ls = [0.0, 0.7, 1.3, 2.9];
    let mut out = Outcome::new(cfg, 2).param("l_samples", json!(ls)).param("grid", json!(grid.len()));
    let (mut spread, mut extract, mut modulus, mut phase) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for sector in 0..2 {
        let p = ff_point(cfg, vec![0.2, 0.5], sector)?;
        let rep = formfactor::vertex_face_consistency(LocalOp::SigmaZ, &p, &ls, &grid, &cfg.contour(), &k, cfg.exec())?;
        spread = spread.max(rep.spread);
        extract = extract.max(rep.extraction_dev).max(rep.l_independence);
        modulus = modulus.max(rep.phase_modulus_dev);
        phase = phase.max(rep.phase_dev);
        if sector == 0 {
            out = ff_echo(out, &p);
        }
    }
    Ok(out
        .residual("ratio_spread", spread)
        .residual("extraction", extract)
        .residual("phase_modulus", modulus)
        .residual("phase_vs_gathered", phase))
}

fn selection_rules(cfg: &RunConfig) -> CheckResult {
    let k = cfg.kernel_ctx(2)?;
    let mut out = Outcome::new(cfg, 2);
    for (m, us) in [(1, vec![0.2, 0.5]), (2, vec![0.1, 0.3, 0.45, 0.6])] {
        let p = ff_point(cfg, us, 0)?;
        for (tag, op) in [("sz", LocalOp::SigmaZ), ("sx", LocalOp::SigmaX)] {
            let rep = formfactor::selection_rule_scan(op, m, &p, &cfg.contour(), &k, cfg.exec())?;
            out = out.residual(&format!("{tag}_m{m}_forbidden"), rep.max_forbidden);
        }
    }
    Ok(out)
}

fn contour_stability(cfg: &RunConfig) -> CheckResult {
    let k = cfg.kernel_ctx(2)?;
    let p = ff_point(cfg, vec![0.1, 0.3, 0.45, 0.6], 0)?;
    let mut out = ff_echo(Outcome::new(cfg, 2), &p).param("points", json!(cfg.contour_points));
    for (tag, op) in [("sz", LocalOp::SigmaZ), ("sx", LocalOp::SigmaX)] {
        let rep = formfactor::contour_stability(&p, op, cfg.contour_points, &k, cfg.exec())?;
        out = out.residual(&format!("{tag}_radius"), rep.radius_spread).residual(&format!("{tag}_refinement"), rep.refinement);
    }
    Ok(out)
}

fn dispatch(name: &str, cfg: &RunConfig) -> CheckResult {
    match name {
        "theta-oracle" => theta_oracle(cfg),
        "bracket-parity" => bracket_parity(cfg),
        "kernel-unitarity" => kernel_unitarity(cfg),
        "ybe" => ybe(cfg),
        "face-ybe" => face_ybe(cfg),
        "vertex-face" => vertex_face(cfg),
        "dual-inversion" => dual_inversion(cfg),
        "tail-delta" => tail_delta(cfg),
        "chi-partition" => chi_partition(cfg),
        "fock-trace" => fock_trace(cfg),
        "ope" => ope(cfg),
        "delta-commutator" => delta_commutator(cfg),
        "nilpotency" => nilpotency(cfg),
        "ksum" => ksum(cfg),
        "ff-consistency" => ff_consistency(cfg),
        "selection-rules" => selection_rules(cfg),
        "contour-stability" => contour_stability(cfg),
        other => Err(CliError::UnknownCheck(other.to_string())),
    }
}

/// Runs one check. Evaluation errors become a failing report carrying the
/// error text; an unregistered name is an error.
pub fn run_check(name: &str, cfg: &RunConfig) -> Result<Report, CliError> {
    if !CHECKS.contains(&name) {
        return Err(CliError::UnknownCheck(name.to_string()));
    }
    let start = Instant::now();
    let res = dispatch(name, cfg);
    let wall = cfg.timing.then(|| start.elapsed().as_secs_f64());
    let threshold = cfg.threshold(name);
    let mut params = BTreeMap::new();
    let report = match res {
        Ok(out) => {
            let residual = out.residuals.values().fold(0.0f64, |a, &b| if b.is_nan() { f64::NAN } else { a.max(b) });
            Report {
                check: name.to_string(),
                seed: cfg.seed,
                params: out.params,
                pass: residual <= threshold,
                residuals: out.residuals,
                residual,
                threshold,
                error: None,
                wall_time_s: wall,
            }
        }
        Err(e) => {
            params.insert("n".into(), json!(cfg.n));
            params.insert("r".into(), json!(cfg.r));
            params.insert("x".into(), json!(cfg.x));
            Report {
                check: name.to_string(),
                seed: cfg.seed,
                params,
                residuals: BTreeMap::new(),
                residual: f64::INFINITY,
                threshold,
                pass: false,
                error: Some(e.to_string()),
                wall_time_s: wall,
            }
        }
    };
    Ok(report)
}

/// Runs `all` or a single named check; reports come back sorted by name.
pub fn run_checks(target: &str, cfg: &RunConfig) -> Result<Vec<Report>, CliError> {
    let names: Vec<&str> = if target == "all" { CHECKS.to_vec() } else { vec![target] };
    let exec = if cfg.parallel { Exec::Parallel } else { Exec::Sequential };
    let mut reports = exec.map(&names, |n| run_check(n, cfg)).into_iter().collect::<Result<Vec<_>, _>>()?;
    reports.sort_by(|a, b| a.check.cmp(&b.check));
    Ok(reports)
}
