//! Tiny arithmetic-expression language used by BosonSpec coefficient tables.
//!
//! Grammar: numbers, variables, `+ - * / ^`, parentheses and the calls
//! `x_number(a)`, `sgn(a)`, `exp(a)`, `ln(a)`, `sqrt(a)`. `^` is right
//! associative and binds tighter than unary minus.

use nom::branch::alt;
use nom::bytes::complete::tag;
use nom::character::complete::{alpha1, alphanumeric1, char, multispace0};
use nom::combinator::{all_consuming, map, recognize};
use nom::multi::{many0, many0_count};
use nom::number::complete::double;
use nom::sequence::{delimited, pair, preceded};
use nom::{IResult, Parser};

use crate::qseries::x_number;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>),
    Call(String, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Variable bindings for evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Env {
    pub x: f64,
    pub r: f64,
    pub n: f64,
    pub m: f64,
    pub j: f64,
    pub k: f64,
}

fn ws<'a, O, P>(inner: P) -> impl Parser<&'a str, Output = O, Error = nom::error::Error<&'a str>>
where
    P: Parser<&'a str, Output = O, Error = nom::error::Error<&'a str>>,
{
    delimited(multispace0, inner, multispace0)
}

fn ident(i: &str) -> IResult<&str, &str> {
    recognize(pair(alt((alpha1, tag("_"))), many0_count(alt((alphanumeric1, tag("_")))))).parse(i)
}

fn primary(i: &str) -> IResult<&str, Expr> {
    ws(alt((
        map(double, Expr::Num),
        map(pair(ident, delimited(ws(char('(')), expr, char(')'))), |(f, a)| {
            Expr::Call(f.to_string(), Box::new(a))
        }),
        map(ident, |v| Expr::Var(v.to_string())),
        delimited(char('('), expr, char(')')),
    )))
    .parse(i)
}

fn power(i: &str) -> IResult<&str, Expr> {
    let (i, base) = primary(i)?;
    let (i, exp) = many0(preceded(ws(char('^')), unary)).parse(i)?;
    // `many0` over a right-recursive rule yields at most one element.
    Ok((i, exp.into_iter().fold(base, |b, e| Expr::Bin(Op::Pow, Box::new(b), Box::new(e)))))
}

fn unary(i: &str) -> IResult<&str, Expr> {
    alt((map(preceded(ws(char('-')), unary), |e| Expr::Neg(Box::new(e))), power)).parse(i)
}

fn term(i: &str) -> IResult<&str, Expr> {
    let (i, first) = unary(i)?;
    let (i, rest) = many0(pair(ws(alt((char('*'), char('/')))), unary)).parse(i)?;
    Ok((i, fold(first, rest)))
}

fn expr(i: &str) -> IResult<&str, Expr> {
    let (i, first) = term(i)?;
    let (i, rest) = many0(pair(ws(alt((char('+'), char('-')))), term)).parse(i)?;
    Ok((i, fold(first, rest)))
}

fn fold(first: Expr, rest: Vec<(char, Expr)>) -> Expr {
    rest.into_iter().fold(first, |acc, (c, e)| {
        let op = match c {
            '+' => Op::Add,
            '-' => Op::Sub,
            '*' => Op::Mul,
            _ => Op::Div,
        };
        Expr::Bin(op, Box::new(acc), Box::new(e))
    })
}

impl Expr {
    /// Parse a complete expression.
    pub fn parse(src: &str) -> Result<Expr, String> {
        all_consuming(expr)
            .parse(src)
            .map(|(_, e)| e)
            .map_err(|e| format!("cannot parse expression `{src}`: {e}"))
    }

    /// Names of the variables and functions used, checked against the
    /// known set.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Expr::Num(_) => Ok(()),
            Expr::Var(v) => match v.as_str() {
                "x" | "r" | "n" | "m" | "j" | "k" | "pi" => Ok(()),
                _ => Err(format!("unknown variable `{v}`")),
            },
            Expr::Neg(e) => e.validate(),
            Expr::Bin(_, a, b) => a.validate().and_then(|_| b.validate()),
            Expr::Call(f, a) => match f.as_str() {
                "x_number" | "sgn" | "exp" | "ln" | "sqrt" => a.validate(),
                _ => Err(format!("unknown function `{f}`")),
            },
        }
    }

    pub fn eval(&self, env: &Env) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(v) => match v.as_str() {
                "x" => env.x,
                "r" => env.r,
                "n" => env.n,
                "m" => env.m,
                "j" => env.j,
                "k" => env.k,
                "pi" => std::f64::consts::PI,
                _ => f64::NAN,
            },
            Expr::Neg(e) => -e.eval(env),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(env), b.eval(env));
                match op {
                    Op::Add => a + b,
                    Op::Sub => a - b,
                    Op::Mul => a * b,
                    Op::Div => a / b,
                    Op::Pow => a.powf(b),
                }
            }
            Expr::Call(f, a) => {
                let a = a.eval(env);
                match f.as_str() {
                    "x_number" => x_number(a, env.x),
                    "sgn" => {
                        if a > 0.0 {
                            1.0
                        } else if a < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    "exp" => a.exp(),
                    "ln" => a.ln(),
                    "sqrt" => a.sqrt(),
                    _ => f64::NAN,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> Env {
        Env { x: 0.3, r: 2.5, n: 2.0, m: 3.0, j: 1.0, k: 2.0 }
    }

    fn ev(s: &str) -> f64 {
        let e = Expr::parse(s).unwrap();
        e.validate().unwrap();
        e.eval(&env())
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2 * 3"), 7.0);
        assert_eq!(ev("(1 + 2) * 3"), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2"), 512.0);
        assert_eq!(ev("-2 ^ 2"), -4.0);
        assert_eq!(ev("8 / 4 / 2"), 1.0);
        assert_eq!(ev("10 - 4 - 3"), 3.0);
        assert_eq!(ev("2*-3"), -6.0);
    }

    #[test]
    fn variables_and_calls() {
        assert!((ev("x^(-2*j*m)") - 0.3f64.powf(-6.0)).abs() < 1e-9);
        assert_eq!(ev("sgn(j-k)"), -1.0);
        let xn = (0.3f64.powf(7.5) - 0.3f64.powf(-7.5)) / (0.3 - 1.0 / 0.3);
        assert!((ev("x_number(r*m)") - xn).abs() < 1e-12 * xn.abs());
        assert!((ev("1.5e-3") - 1.5e-3).abs() < 1e-18);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("foo(1)").unwrap().validate().is_err());
        assert!(Expr::parse("q").unwrap().validate().is_err());
    }
}
