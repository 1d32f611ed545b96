//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ebff::formfactor::{ContourSpec, RadiusRule};
use ebff::freefield::BosonSpec;
use ebff::kernels::KernelContext;
use ebff::{EllipticParams, TruncationPolicy};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    JsonLines,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub r: f64,
    pub x: f64,
    pub tail_tol: f64,
    pub max_terms: usize,
    pub contour_points: usize,
    /// `None` selects the geometric-mean radius; otherwise a fraction of the annulus.
    pub contour_fraction: Option<f64>,
    pub boson_spec: Option<PathBuf>,
    pub seed: u64,
    pub samples: usize,
    pub format: Format,
    pub timing: bool,
    pub parallel: bool,
    pub ope_order: i64,
    pub tail_depth: usize,
    pub chi_depth: usize,
    pub thresholds: BTreeMap<String, f64>,
}

/// Threshold defaults, one per registered check.
pub const DEFAULT_THRESHOLDS: [(&str, f64); 17] = [
    ("bracket-parity", 1e-12),
    ("chi-partition", 1e-6),
    ("contour-stability", 1e-8),
    ("delta-commutator", 1e-12),
    ("dual-inversion", 1e-9),
    ("face-ybe", 1e-9),
    ("ff-consistency", 1e-6),
    ("fock-trace", 1e-10),
    ("kernel-unitarity", 1e-12),
    ("ksum", 1e-10),
    ("nilpotency", 1e-12),
    ("ope", 1e-10),
    ("selection-rules", 1e-8),
    ("tail-delta", 1e-6),
    ("theta-oracle", 1e-12),
    ("vertex-face", 1e-9),
    ("ybe", 1e-9),
];

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 2,
            r: 3.0,
            x: 0.4,
            tail_tol: 1e-16,
            max_terms: 4096,
            contour_points: 512,
            contour_fraction: None,
            boson_spec: None,
            seed: 0,
            samples: 20,
            format: Format::JsonLines,
            timing: false,
            parallel: true,
            ope_order: 12,
            tail_depth: 12,
            chi_depth: 14,
            thresholds: DEFAULT_THRESHOLDS.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Config(format!("line {line}: bad value {value:?} for {key}")))
}

fn flag(key: &str, value: &str, line: usize) -> Result<bool, CliError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(CliError::Config(format!("line {line}: {key} must be true or false"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| CliError::Config(format!("line {line}: expected key = value")))?;
            match key {
                "n" => cfg.n = num(key, value, line)?,
                "r" => cfg.r = num(key, value, line)?,
                "x" => cfg.x = num(key, value, line)?,
                "tail_tol" => cfg.tail_tol = num(key, value, line)?,
                "max_terms" => cfg.max_terms = num(key, value, line)?,
                "contour_points" => cfg.contour_points = num(key, value, line)?,
                "contour_radius" => {
                    cfg.contour_fraction = match value {
                        "geometric" => None,
                        v => Some(num(key, v, line)?),
                    }
                }
                "boson_spec" => {
                    let p = PathBuf::from(value);
                    let p = match base_dir {
                        Some(d) if p.is_relative() => d.join(p),
                        _ => p,
                    };
                    if !p.exists() {
                        return Err(CliError::Config(format!("line {line}: boson_spec {} does not exist", p.display())));
                    }
                    cfg.boson_spec = Some(p);
                }
                "seed" => cfg.seed = num(key, value, line)?,
                "samples" => cfg.samples = num(key, value, line)?,
                "format" => {
                    cfg.format = match value {
                        "jsonl" | "json-lines" => Format::JsonLines,
                        "csv" => Format::Csv,
                        _ => return Err(CliError::Config(format!("line {line}: format must be jsonl or csv"))),
                    }
                }
                "timing" => cfg.timing = flag(key, value, line)?,
                "parallel" => cfg.parallel = flag(key, value, line)?,
                "ope_order" => cfg.ope_order = num(key, value, line)?,
                "tail_depth" => cfg.tail_depth = num(key, value, line)?,
                "chi_depth" => cfg.chi_depth = num(key, value, line)?,
                k => match k.strip_prefix("threshold.") {
                    Some(name) if cfg.thresholds.contains_key(name) => {
                        cfg.thresholds.insert(name.to_string(), num(key, value, line)?);
                    }
                    _ => return Err(CliError::Config(format!("line {line}: unknown key {k:?}"))),
                },
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    pub fn params(&self) -> Result<EllipticParams, CliError> {
        Ok(EllipticParams::new(self.n, self.r, self.x)?)
    }

    pub fn params_n(&self, n: usize) -> Result<EllipticParams, CliError> {
        Ok(EllipticParams::new(n, self.r, self.x)?)
    }

    pub fn policy(&self) -> Result<TruncationPolicy, CliError> {
        Ok(TruncationPolicy::new(self.tail_tol, self.max_terms)?)
    }

    pub fn kernel_ctx(&self, n: usize) -> Result<KernelContext, CliError> {
        Ok(KernelContext::with_policy(self.params_n(n)?, self.policy()?))
    }

    pub fn bosons(&self) -> Result<BosonSpec, CliError> {
        match &self.boson_spec {
            Some(p) => Ok(BosonSpec::from_file(p)?),
            None => Ok(BosonSpec::default()),
        }
    }

    pub fn contour(&self) -> ContourSpec {
        let rule = match self.contour_fraction {
            None => RadiusRule::GeometricMean,
            Some(t) => RadiusRule::Interpolate(t),
        };
        ContourSpec::new(rule, self.contour_points)
    }

    pub fn exec(&self) -> ebff::Exec {
        if self.parallel {
            ebff::Exec::Parallel
        } else {
            ebff::Exec::Sequential
        }
    }

    pub fn threshold(&self, check: &str) -> f64 {
        self.thresholds.get(check).copied().unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_thresholds() {
        let cfg = RunConfig::parse("# run\nn = 3\nx = 0.35 # inline\nthreshold.ybe = 1e-8\ntiming = true\n", None).unwrap();
        assert_eq!(cfg.n, 3);
        assert_eq!(cfg.x, 0.35);
        assert_eq!(cfg.threshold("ybe"), 1e-8);
        assert!(cfg.timing);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(RunConfig::parse("bogus = 1", None), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("threshold.nope = 1", None), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("x 0.3", None), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("x = abc", None), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("boson_spec = /no/such/file", None), Err(CliError::Config(_))));
    }

    #[test]
    fn every_check_has_a_threshold() {
        let cfg = RunConfig::default();
        for name in crate::checks::CHECKS {
            assert!(cfg.thresholds.contains_key(name), "{name}");
        }
    }
}
