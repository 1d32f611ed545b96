//! Boson commutator tables loaded from plain-text data.

use std::path::Path;

use super::expr::{Env, Expr};
use crate::{Error, Result};

/// The table shipped with the crate.
pub const DEFAULT_SPEC: &str = include_str!("../../data/boson_default.spec");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Index(usize),
    Sym(char),
}

impl Slot {
    fn parse(tok: &str) -> Option<Slot> {
        match tok {
            "j" => Some(Slot::Sym('j')),
            "k" => Some(Slot::Sym('k')),
            _ => tok.parse().ok().filter(|&v: &usize| v >= 1).map(Slot::Index),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Row {
    a: Slot,
    b: Slot,
    formula: Expr,
    line: usize,
}

impl Row {
    fn matches(&self, i: usize, k: usize) -> bool {
        let fits = |s: Slot, v: usize| matches!(s, Slot::Sym(_)) || s == Slot::Index(v);
        if !fits(self.a, i) || !fits(self.b, k) {
            return false;
        }
        match (self.a, self.b) {
            (Slot::Sym(p), Slot::Sym(q)) if p == q => i == k,
            _ => true,
        }
    }

    fn specificity(&self) -> usize {
        [self.a, self.b].iter().filter(|s| matches!(s, Slot::Index(_))).count()
    }
}

/// Rescaled boson families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rescale {
    /// `A^j_m`, used by the type II operators.
    A,
    /// `O^j_m`, used by the tail operators.
    O,
}

/// Weights of the zero-mode lattice that label the basic operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Zero,
    Omega(usize),
    Alpha(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    Cartan,
}

/// Commutators `[B^i_m, B^k_{-m}]`, zero-mode pairing and rescaling maps.
#[derive(Debug, Clone, PartialEq)]
pub struct BosonSpec {
    label: String,
    rows: Vec<Row>,
    constraint: Option<Expr>,
    pairing: Option<Pairing>,
    rescale_a: Option<Expr>,
    rescale_o: Option<Expr>,
}

impl Default for BosonSpec {
    fn default() -> Self {
        Self::parse(DEFAULT_SPEC).expect("shipped boson spec parses")
    }
}

fn parse_expr(src: &str, line: usize) -> Result<Expr> {
    let e = Expr::parse(src).map_err(|msg| Error::SpecParse { line, msg })?;
    e.validate().map_err(|msg| Error::SpecParse { line, msg })?;
    Ok(e)
}

impl BosonSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = BosonSpec {
            label: String::from("unnamed"),
            rows: vec![],
            constraint: None,
            pairing: None,
            rescale_a: None,
            rescale_o: None,
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (head, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
            let rest = rest.trim();
            let perr = |msg: &str| Error::SpecParse { line, msg: msg.to_string() };
            match head {
                "@label" => spec.label = rest.to_string(),
                "@constraint" => spec.constraint = Some(parse_expr(rest, line)?),
                "@pairing" => match rest {
                    "cartan" => spec.pairing = Some(Pairing::Cartan),
                    _ => return Err(perr("unknown pairing; expected `cartan`")),
                },
                "@rescale" => {
                    let (fam, f) = rest.split_once(char::is_whitespace).ok_or_else(|| perr("missing formula"))?;
                    let e = parse_expr(f.trim(), line)?;
                    match fam {
                        "A" => spec.rescale_a = Some(e),
                        "O" => spec.rescale_o = Some(e),
                        _ => return Err(perr("rescale family must be A or O")),
                    }
                }
                d if d.starts_with('@') => return Err(perr("unknown directive")),
                _ => {
                    let a = Slot::parse(head).ok_or_else(|| perr("bad first index"))?;
                    let (tok, f) = rest.split_once(char::is_whitespace).ok_or_else(|| perr("missing formula"))?;
                    let b = Slot::parse(tok).ok_or_else(|| perr("bad second index"))?;
                    spec.rows.push(Row { a, b, formula: parse_expr(f.trim(), line)?, line });
                }
            }
        }
        if spec.rows.is_empty() {
            return Err(Error::SpecParse { line: 0, msg: "no commutator rows".into() });
        }
        // Explicit entries win over generic ones; file order breaks ties.
        spec.rows.sort_by_key(|r| (std::cmp::Reverse(r.specificity()), r.line));
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::SpecParse { line: 0, msg: format!("{}: {e}", path.as_ref().display()) })?;
        Self::parse(&text)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// How the extra boson `B^n` is handled.
    pub fn convention(&self) -> String {
        match &self.constraint {
            Some(_) => "B^n constrained: sum_j w_j(m) B^j_m = 0".to_string(),
            None => "B^n independent".to_string(),
        }
    }

    fn env(x: f64, r: f64, n: usize, m: i64, j: usize, k: usize) -> Env {
        Env { x, r, n: n as f64, m: m as f64, j: j as f64, k: k as f64 }
    }

    /// `[B^i_m, B^k_{-m}]` for `1 <= i, k <= n`.
    pub fn commutator(&self, i: usize, k: usize, m: i64, x: f64, r: f64, n: usize) -> Result<f64> {
        let row = self
            .rows
            .iter()
            .find(|row| row.matches(i, k))
            .ok_or_else(|| Error::SpecMissing(format!("commutator ({i},{k})")))?;
        Ok(row.formula.eval(&Self::env(x, r, n, m, i, k)))
    }

    /// Weight of `B^j_m` in the linear constraint, if one is loaded.
    pub fn constraint_weight(&self, j: usize, m: i64, x: f64, r: f64, n: usize) -> Option<f64> {
        self.constraint.as_ref().map(|e| e.eval(&Self::env(x, r, n, m, j, j)))
    }

    /// Rescaling factor `s(m)` with e.g. `A^j_m = s(m) B^j_m`.
    pub fn rescale(&self, fam: Rescale, m: i64, x: f64, r: f64, n: usize) -> Result<f64> {
        let e = match fam {
            Rescale::A => self.rescale_a.as_ref(),
            Rescale::O => self.rescale_o.as_ref(),
        }
        .ok_or_else(|| Error::SpecMissing(format!("rescale {fam:?}")))?;
        Ok(e.eval(&Self::env(x, r, n, m, 0, 0)))
    }

    /// Zero-mode pairing `<a, b>`.
    pub fn pairing(&self, a: Weight, b: Weight, n: usize) -> Result<f64> {
        if self.pairing.is_none() {
            return Err(Error::SpecMissing("zero-mode pairing".into()));
        }
        let nf = n as f64;
        Ok(match (a, b) {
            (Weight::Zero, _) | (_, Weight::Zero) => 0.0,
            (Weight::Omega(i), Weight::Omega(j)) => {
                let (lo, hi) = (i.min(j) as f64, i.max(j) as f64);
                lo * (nf - hi) / nf
            }
            (Weight::Omega(i), Weight::Alpha(j)) | (Weight::Alpha(j), Weight::Omega(i)) => {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            }
            (Weight::Alpha(i), Weight::Alpha(j)) => {
                if i == j {
                    2.0
                } else if i.abs_diff(j) == 1 {
                    -1.0
                } else {
                    0.0
                }
            }
        })
    }

    /// Largest `|c^{ik}(m) + c^{ki}(-m)|` over indices and `1 <= m <= modes`.
    pub fn adjointness_violation(&self, modes: i64, x: f64, r: f64, n: usize) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for m in 1..=modes {
            for i in 1..=n {
                for k in 1..=n {
                    let a = self.commutator(i, k, m, x, r, n)?;
                    let b = self.commutator(k, i, -m, x, r, n)?;
                    worst = worst.max((a + b).abs() / a.abs().max(1.0));
                }
            }
        }
        Ok(worst)
    }
}
