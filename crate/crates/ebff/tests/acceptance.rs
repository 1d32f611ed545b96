//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::Instant;

use ebff::ctm::{self, EnumConfig, FacePath, FockSpec};
use ebff::formfactor::{self, ContourSpec, FF2Params};
use ebff::freefield::{self, BosonSpec, FieldContext};
use ebff::kernels::{self, KernelContext, LocalOp};
use ebff::lattice::{HeightState, Lattice};
use ebff::qseries::{self, br};
use ebff::{EllipticParams, Exec, TruncationPolicy, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), ebff::Error>;

const SEED: u64 = 20_240_611;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn params(n: usize, r: f64, x: f64) -> EllipticParams {
    EllipticParams::new(n, r, x).expect("valid parameters")
}

fn pol() -> TruncationPolicy {
    TruncationPolicy::default()
}

// Σ_k (−1)^k q^{k(k−1)/2} z^k
fn theta_bilateral(z: C64, q: C64) -> C64 {
    (-400i32..=400).map(|k| q.powf((k * (k - 1)) as f64 / 2.0) * (-z).powi(k)).sum()
}

fn theta_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let q = C64::from_polar(rng.random_range(0.05..0.8), rng.random_range(-3.1..3.1));
        // the fundamental annulus |q|^{1/2} ≤ |z| ≤ |q|^{−1/2}
        let s = q.norm().sqrt();
        let z = C64::from_polar(rng.random_range(s..1.0 / s), rng.random_range(-3.1..3.1));
        let got = qseries::theta_big(z, q, &pol())?;
        let want = theta_bilateral(z, q);
        worst = worst.max((got - want).norm() / want.norm());
    }
    Ok((worst < 1e-12, format!("max rel err {worst:.2e} (tol 1e-12)")))
}

fn bracket_parity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut worst = 0.0f64;
    for &(x, r) in &[(0.3, 2.5), (0.5, 4.0)] {
        let p = params(2, r, x);
        for _ in 0..100 {
            let v = C64::new(rng.random_range(-2.0..2.0), rng.random_range(-0.5..0.5));
            let b = qseries::bracket(v, br::SQ, &p, &pol())?;
            let scale = b.norm().max(1e-300);
            let odd = (qseries::bracket(-v, br::SQ, &p, &pol())? + b).norm() / scale;
            let shift = (qseries::bracket(v + r, br::SQ, &p, &pol())? + b).norm() / scale;
            worst = worst.max(odd).max(shift);
        }
    }
    Ok((worst < 1e-12, format!("max rel err {worst:.2e} (tol 1e-12)")))
}

fn kernel_unitarity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let (mut rr, mut chi, mut fpsi) = (0.0f64, 0.0f64, 0.0f64);
    for n in [2, 3] {
        let k = KernelContext::new(params(n, 2.7, 0.35));
        for _ in 0..20 {
            let v = C64::new(rng.random_range(-0.45..0.45), rng.random_range(-0.3..0.3));
            for j in 1..=n {
                let a = kernels::g_and_r(j, v, &k)?.1 * kernels::g_and_r(j, -v, &k)?.1;
                let b = kernels::gstar_and_rstar(j, v, &k)?.1 * kernels::gstar_and_rstar(j, -v, &k)?.1;
                rr = rr.max((a - 1.0).norm()).max((b - 1.0).norm());
                let ch = kernels::chi_j(j, v, &k)? * kernels::chi_j(j, -v, &k)?;
                chi = chi.max((ch - 1.0).norm());
            }
        }
    }
    let k = KernelContext::new(params(2, 3.0, 0.4));
    let x4 = 0.4f64.powi(4);
    for _ in 0..20 {
        let z = C64::from_polar(rng.random_range(0.03..0.5), rng.random_range(-3.0..3.0));
        let a = kernels::f_psipsi(z, &k)?;
        fpsi = fpsi.max((a - kernels::f_psipsi(x4 / z, &k)?).norm() / a.norm().max(1.0));
    }
    let pass = rr < 1e-12 && chi < 1e-12 && fpsi < 1e-12;
    Ok((pass, format!("r,r* {rr:.2e}; chi {chi:.2e}; F_psipsi {fpsi:.2e} (tol 1e-12)")))
}

fn lattice_relations() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mut worst = 0.0f64;
    for n in [2, 3] {
        let k = KernelContext::new(params(n, 3.3, 0.4));
        for lat in [Lattice::new(&k), Lattice::primed(&k)] {
            for _ in 0..10 {
                let a = HeightState::new((0..n).map(|_| rng.random_range(0.0..3.0)).collect())?;
                let v1 = c(rng.random_range(0.1..0.9));
                let v2 = c(rng.random_range(0.0..0.5));
                let r = lat.build_r(v1 - v2)?;
                worst = worst
                    .max(lat.vertex_face_residual(&r, &a, v1, v2)?)
                    .max(lat.dual_relation_residual(&r, &a, v1, v2)?)
                    .max(lat.dual_inversion_residual(v1, &a)?)
                    .max(lat.ybe_residual(v1, v2)?)
                    .max(lat.face_ybe_residual(&a, v1, v2)?);
            }
        }
    }
    Ok((worst < 1e-9, format!("max residual {worst:.2e} (tol 1e-9)")))
}

fn tail_delta() -> Outcome {
    let (x, j_max) = (0.4f64, 12usize);
    let k = KernelContext::new(params(2, 3.3, x));
    let lat = Lattice::new(&k);
    let xi = HeightState::new(vec![0.31, 1.77])?;
    let u = c(0.27);
    let tail = |depth: usize| -> Result<C64, ebff::Error> {
        let path = FacePath::ground(xi.clone(), 0, depth + 3)?;
        lat.tail_truncated(u, path.heights(), path.heights(), depth)
    };
    let lam = tail(j_max)?;
    let dev = (lam - 1.0).norm();
    let mut bound_ok = true;
    for depth in 2..j_max {
        let step = (tail(depth + 1)? - tail(depth)?).norm();
        bound_ok &= step <= 10.0 * x.powi(2 * depth as i32);
    }
    Ok((dev < 1e-6 && bound_ok, format!("|Lambda-1| {dev:.2e} at J={j_max} (tol 1e-6); increment bound {bound_ok}")))
}

fn chi_partition() -> Outcome {
    let x = 0.3;
    let want = ctm::chi_closed_form_n2(x, &pol())?;
    let mut worst = 0.0f64;
    for i in 0..2 {
        let got = ctm::chi_partition(i, 14, &params(2, 2.5, x), &EnumConfig::default())?;
        worst = worst.max((got.value - want).abs() / want);
    }
    Ok((worst < 1e-6, format!("max rel err {worst:.2e} (tol 1e-6)")))
}

fn fock_trace() -> Outcome {
    let mut worst = 0.0f64;
    let mut spectrum = 0.0f64;
    for &(n, r, x) in &[(2, 2.5, 0.4), (3, 3.3, 0.4)] {
        let l = HeightState::new((0..n).map(|k| 0.37 * k as f64 + 0.1).collect())?;
        let k = HeightState::new((0..n).map(|k| -0.21 * (k * k) as f64).collect())?;
        let spec = FockSpec::new(l, k, FockSpec::modes_for(x, n, 1e-14), BosonSpec::default())?;
        let t = ctm::fock_trace(&spec, &params(n, r, x), None, &pol())?;
        worst = worst.max(t.rel_error);
        spectrum = spectrum.max(t.spectrum_dev);
    }
    Ok((worst < 1e-10, format!("max rel err {worst:.2e} (tol 1e-10); spectrum dev {spectrum:.2e}")))
}

fn appendix_identities() -> Outcome {
    let (mut ope, mut delta, mut nil) = (0.0f64, 0.0f64, 0.0f64);
    let mut count = 0;
    for n in [2, 3] {
        let ctx = FieldContext::new(params(n, 2.5, 0.3), BosonSpec::default());
        for (_, res) in freefield::ope_check_all(12, &ctx, Exec::Parallel) {
            ope = ope.max(res?.max());
            count += 1;
        }
        for j in 1..n {
            let d = freefield::delta_commutator_check(j, 12, &ctx)?;
            delta = delta.max(d.commutator).max(d.prefactor);
        }
        nil = nil.max(freefield::nilpotency_check(&ctx)?.max_vanishing());
    }
    let pass = ope < 1e-10 && delta < 1e-12 && nil < 1e-12;
    Ok((pass, format!("{count} OPE checks max {ope:.2e} (tol 1e-10); delta {delta:.2e}, nilpotency {nil:.2e} (tol 1e-12)")))
}

fn ksum() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9);
    let mut worst = 0.0f64;
    for draw in 0..20 {
        let k = KernelContext::new(params(2, rng.random_range(2.2..4.0), rng.random_range(0.2..0.5)));
        let i = draw % 2;
        let l = rng.random_range(0.0..3.0);
        let (u, u0) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let (us, vs) = if draw % 4 < 2 {
            (vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)], vec![])
        } else {
            let us: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            (us, vec![C64::new(rng.random_range(0.0..1.0), rng.random_range(-0.2..0.2))])
        };
        let rep = formfactor::zero_mode_sum_check(i, l, u, u0, &us, &vs, 16, &k)?;
        worst = worst.max(rep.rel);
    }
    Ok((worst < 1e-10, format!("max rel err {worst:.2e} over 20 draws (tol 1e-10)")))
}

fn ff2(us: Vec<f64>) -> Result<FF2Params, ebff::Error> {
    FF2Params::new(params(2, 3.0, 0.4), 0.3, 0.1, 0.7, 0, us)
}

fn m1_consistency() -> Outcome {
    let k = KernelContext::new(params(2, 3.0, 0.4));
    let grid: Vec<(f64, f64)> = [0.05, 0.15, 0.25, 0.35, 0.45]
        .iter()
        .flat_map(|&a| [0.4, 0.5, 0.6, 0.7, 0.8].map(|b| (a, b)))
        .collect();
    let ls = [0.0, 0.7, 1.3, 2.9];
    let (mut spread, mut extract, mut modulus) = (0.0f64, 0.0f64, 0.0f64);
    for sector in 0..2 {
        let p = FF2Params { sector, ..ff2(vec![0.2, 0.5])? };
        let rep = formfactor::vertex_face_consistency(LocalOp::SigmaZ, &p, &ls, &grid, &ContourSpec::default(), &k, Exec::Parallel)?;
        spread = spread.max(rep.spread);
        extract = extract.max(rep.extraction_dev).max(rep.l_independence);
        modulus = modulus.max(rep.phase_modulus_dev);
    }
    let pass = spread < 1e-6 && extract < 1e-6 && modulus < 1e-8;
    Ok((pass, format!("ratio spread {spread:.2e}, extraction {extract:.2e} (tol 1e-6); phase modulus dev {modulus:.2e} (tol 1e-8)")))
}

fn selection_rules() -> Outcome {
    let k = KernelContext::new(params(2, 3.0, 0.4));
    let spec = ContourSpec::default();
    let (mut m1, mut m2) = (0.0f64, 0.0f64);
    for op in [LocalOp::SigmaZ, LocalOp::SigmaX] {
        m1 = m1.max(formfactor::selection_rule_scan(op, 1, &ff2(vec![0.2, 0.5])?, &spec, &k, Exec::Parallel)?.max_forbidden);
        m2 = m2.max(formfactor::selection_rule_scan(op, 2, &ff2(vec![0.1, 0.3, 0.45, 0.6])?, &spec, &k, Exec::Parallel)?.max_forbidden);
    }
    Ok((m1 == 0.0 && m2 < 1e-8, format!("m=1 forbidden {m1:.1e} (exact 0); m=2 forbidden {m2:.2e} x max (tol 1e-8)")))
}

fn contour_stability() -> Outcome {
    let k = KernelContext::new(params(2, 3.0, 0.4));
    let p = FF2Params { u0: 0.05, ..ff2(vec![0.1, 0.3, 0.45, 0.6])? };
    let (mut radius, mut refine) = (0.0f64, 0.0f64);
    for op in [LocalOp::SigmaZ, LocalOp::SigmaX] {
        let rep = formfactor::contour_stability(&p, op, 512, &k, Exec::Parallel)?;
        radius = radius.max(rep.radius_spread);
        refine = refine.max(rep.refinement);
    }
    let pass = radius < 1e-8 && refine < 1e-8;
    Ok((pass, format!("3-radius spread {radius:.2e}, N=256 vs 512 {refine:.2e} (tol 1e-8)")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("theta oracle", theta_oracle),
        ("bracket parity and quasi-periodicity", bracket_parity),
        ("kernel unitarity", kernel_unitarity),
        ("lattice relations n=2,3", lattice_relations),
        ("tail identity", tail_delta),
        ("chi path partition", chi_partition),
        ("Fock trace formula", fock_trace),
        ("OPE, delta commutator, nilpotency", appendix_identities),
        ("k-sum resummation", ksum),
        ("m=1 cross-formula consistency", m1_consistency),
        ("selection rules", selection_rules),
        ("m=2 contour integral", contour_stability),
    ];
    let mut failed = 0;
    for (idx, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(out) => out,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {:>2} {name}: {detail} ({:.2}s)", idx + 1, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
