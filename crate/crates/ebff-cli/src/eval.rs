//! Point and sweep evaluation of form factors and kernels.

use ebff::formfactor::{self, FF2Params};
use ebff::kernels::{self, KernelContext, LocalOp, FPRIME_ROOT_BRANCH};
use ebff::qseries::{self, br, NEG_POW_BRANCH};
use ebff::C64;
use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::output;
use crate::CliError;

/// A sweep over the first two rapidities: `u1=a:b:k,u2=c:d:k`, endpoints
/// included.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

fn linspace(spec: &str, key: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("grid axis {key} must look like {key}=start:stop:count, got {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, k] = parts.as_slice() else { return Err(bad()) };
    let (a, b): (f64, f64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
    let k: usize = k.parse().map_err(|_| bad())?;
    match k {
        0 => Err(bad()),
        1 => Ok(vec![a]),
        _ => Ok((0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()),
    }
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let (mut u1, mut u2) = (None, None);
        for axis in text.split(',') {
            match axis.split_once('=') {
                Some(("u1", s)) => u1 = Some(linspace(s.trim(), "u1")?),
                Some(("u2", s)) => u2 = Some(linspace(s.trim(), "u2")?),
                _ => return Err(CliError::Usage(format!("unknown grid axis {axis:?}; expected u1=… and u2=…"))),
            }
        }
        match (u1, u2) {
            (Some(u1), Some(u2)) => Ok(Self { u1, u2 }),
            _ => Err(CliError::Usage("grid needs both u1 and u2 axes".into())),
        }
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.u1.iter().flat_map(|&a| self.u2.iter().map(move |&b| (a, b))).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfRequest {
    pub op: LocalOp,
    pub m: usize,
    pub x: f64,
    pub r: f64,
    pub u: f64,
    pub u0: f64,
    pub l: f64,
    pub sector: usize,
    pub us: Vec<f64>,
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub neg_pow_branch: &'static str,
    pub fprime_root_branch: &'static str,
    pub tail_tol: f64,
    pub max_terms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Component {
    pub nus: Vec<i8>,
    pub re: f64,
    pub im: f64,
    pub selection_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FfRecord {
    pub index: usize,
    pub op: &'static str,
    pub m: usize,
    pub x: f64,
    pub r: f64,
    pub u: f64,
    pub u0: f64,
    pub l: f64,
    pub sector: usize,
    pub us: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<Component>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contour_points: Option<usize>,
    pub provenance: Provenance,
}

pub fn op_name(op: LocalOp) -> &'static str {
    match op {
        LocalOp::SigmaZ => "sz",
        LocalOp::SigmaX => "sx",
    }
}

pub fn parse_op(s: &str) -> Result<LocalOp, CliError> {
    match s {
        "sz" => Ok(LocalOp::SigmaZ),
        "sx" => Ok(LocalOp::SigmaX),
        _ => Err(CliError::Usage(format!("--op must be sz or sx, got {s:?}"))),
    }
}

/// One record per rapidity point. For m = 1 each record holds all four spin
/// components from the closed form; for m = 2 it holds the all-down face
/// component from the contour integral.
pub fn ff_eval(req: &FfRequest, cfg: &RunConfig) -> Result<Vec<FfRecord>, CliError> {
    if req.m != 1 && req.m != 2 {
        return Err(CliError::Usage(format!("--m must be 1 or 2, got {}", req.m)));
    }
    if req.us.len() != 2 * req.m {
        return Err(CliError::Usage(format!("--u-list needs {} rapidities for m = {}, got {}", 2 * req.m, req.m, req.us.len())));
    }
    let params = ebff::EllipticParams::new(2, req.r, req.x)?;
    let ctx = KernelContext::with_policy(params, cfg.policy()?);
    let base = FF2Params::new(params, req.u, req.u0, req.l, req.sector, req.us.clone())?;
    let points: Vec<Vec<f64>> = match &req.grid {
        None => vec![req.us.clone()],
        Some(g) => g
            .points()
            .into_iter()
            .map(|(a, b)| {
                let mut us = req.us.clone();
                us[0] = a;
                us[1] = b;
                us
            })
            .collect(),
    };
    let provenance = Provenance {
        neg_pow_branch: NEG_POW_BRANCH,
        fprime_root_branch: FPRIME_ROOT_BRANCH,
        tail_tol: cfg.tail_tol,
        max_terms: cfg.max_terms,
    };
    let contour = cfg.contour();
    let mut records = Vec::with_capacity(points.len());
    for (index, us) in points.into_iter().enumerate() {
        let mut rec = FfRecord {
            index,
            op: op_name(req.op),
            m: req.m,
            x: req.x,
            r: req.r,
            u: req.u,
            u0: req.u0,
            l: req.l,
            sector: req.sector,
            us: us.clone(),
            components: Vec::new(),
            value: None,
            quad_error: None,
            contour_points: None,
            provenance: provenance.clone(),
        };
        if req.m == 1 {
            for nus in formfactor::spin_assignments(2) {
                let v = formfactor::f2(req.op, us[0], us[1], nus[0], nus[1], req.sector, &base, &ctx)?;
                let selection_zero = !formfactor::selection_allowed(req.op, &nus);
                rec.components.push(Component { nus, re: v.value.re, im: v.value.im, selection_zero });
            }
        } else {
            let p = base.with_rapidities(us);
            let v = formfactor::f_face_2m(&p, req.op, &contour, &ctx, cfg.exec())?;
            rec.value = Some([v.value.re, v.value.im]);
            rec.quad_error = Some(v.quad_error);
            rec.contour_points = Some(contour.points);
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn write_ff<W: std::io::Write>(records: &[FfRecord], format: Format, out: &mut W) -> Result<(), CliError> {
    match format {
        Format::JsonLines => output::json_lines(records, out),
        Format::Csv => {
            let join = |v: &[f64]| v.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(" ");
            let mut rows = Vec::new();
            for rec in records {
                if rec.components.is_empty() {
                    let [re, im] = rec.value.unwrap_or([f64::NAN, f64::NAN]);
                    let err = rec.quad_error.unwrap_or(f64::NAN);
                    rows.push(vec![rec.index.to_string(), join(&rec.us), "-".repeat(2 * rec.m), re.to_string(), im.to_string(), err.to_string(), String::new()]);
                }
                for c in &rec.components {
                    let nus: String = c.nus.iter().map(|&n| if n > 0 { '+' } else { '-' }).collect();
                    rows.push(vec![
                        rec.index.to_string(),
                        join(&rec.us),
                        nus,
                        c.re.to_string(),
                        c.im.to_string(),
                        "0".into(),
                        c.selection_zero.to_string(),
                    ]);
                }
            }
            output::csv_rows(&["index", "us", "nus", "re", "im", "quad_error", "selection_zero"], &rows, out)
        }
    }
}

/// Kernel functions reachable from `ebff kernel`. The first group takes a
/// multiplicative argument `z`, the second an additive one `v`.
pub const KERNELS: [&str; 10] = ["g", "gstar", "rho", "f-psipsi", "theta", "r", "rstar", "chi", "f-prime", "bracket"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelRecord {
    pub function: String,
    pub j: usize,
    pub n: usize,
    pub r: f64,
    pub x: f64,
    pub at: [f64; 2],
    pub value: [f64; 2],
    pub branch: &'static str,
}

pub fn parse_complex(s: &str) -> Result<C64, CliError> {
    let bad = || CliError::Usage(format!("--at expects re or re,im, got {s:?}"));
    let mut it = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| bad()));
    let re = it.next().ok_or_else(bad)??;
    let im = it.next().transpose()?.unwrap_or(0.0);
    if it.next().is_some() {
        return Err(bad());
    }
    Ok(C64::new(re, im))
}

/// Evaluates one kernel. `theta` is Θ_q(z) with `q = x^{2r}`; `bracket` is
/// the level-r square bracket `[v]`.
pub fn kernel_eval(name: &str, at: C64, j: usize, cfg: &RunConfig) -> Result<KernelRecord, CliError> {
    let ctx = cfg.kernel_ctx(cfg.n)?;
    let (n, r, x) = (cfg.n, cfg.r, cfg.x);
    if j == 0 || j > n {
        return Err(CliError::Usage(format!("--j must lie in 1..={n}, got {j}")));
    }
    let value = match name {
        "g" => kernels::g_j(j, at, &ctx)?,
        "gstar" => kernels::gstar_j(j, at, &ctx)?,
        "rho" => kernels::rho_j(j, at, &ctx)?,
        "f-psipsi" => kernels::f_psipsi(at, &cfg.kernel_ctx(2)?)?,
        "theta" => qseries::theta_big(at, C64::new(x.powf(2.0 * r), 0.0), &ctx.policy)?,
        "r" => kernels::g_and_r(j, at, &ctx)?.1,
        "rstar" => kernels::gstar_and_rstar(j, at, &ctx)?.1,
        "chi" => kernels::chi_j(j, at, &ctx)?,
        "f-prime" => kernels::f_prime(at, &ctx)?,
        "bracket" => qseries::bracket(at, br::SQ, &ctx.params, &ctx.policy)?,
        other => return Err(CliError::Usage(format!("unknown kernel {other:?}; expected one of {}", KERNELS.join(", ")))),
    };
    let branch = match name {
        "f-prime" => FPRIME_ROOT_BRANCH,
        _ => NEG_POW_BRANCH,
    };
    Ok(KernelRecord { function: name.into(), j, n, r, x, at: [at.re, at.im], value: [value.re, value.im], branch })
}
