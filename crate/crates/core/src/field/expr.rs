//! Infix expressions with exact symbolic differentiation.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numeric literals, the
//! constants `pi` and `e`, and the functions `sqrt exp log abs max min`.
//! Variables are resolved against a caller-supplied name list.

use std::fmt;

use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Exp,
    Log,
    Abs,
    /// `sign(u)`, the derivative of `abs`.
    Sign,
    /// Heaviside step `1[u >= 0]`, used when differentiating `max`/`min`.
    Step,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at column {}: {}", self.position + 1, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| ParseError { position: start, message: format!("bad number '{text}'") })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((start, Tok::Ident(chars[start..i].iter().collect())));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => return Err(ParseError { position: i, message: format!("unexpected character '{c}'") }),
            };
            out.push((i, tok));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    vars: &'a [&'a str],
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.len)
    }

    fn err<X>(&self, message: impl Into<String>) -> Result<X, ParseError> {
        Err(ParseError { position: self.here(), message: message.into() })
    }

    fn expect(&mut self, t: Tok) -> Result<(), ParseError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {t:?}"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' { Expr::Add(lhs.into(), rhs.into()) } else { Expr::Sub(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' { Expr::Mul(lhs.into(), rhs.into()) } else { Expr::Div(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(self.unary()?.into()))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(base.into(), exp.into()));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                let at = self.here();
                self.pos += 1;
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let a = self.expr()?;
                    let b = if self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                        Some(self.expr()?)
                    } else {
                        None
                    };
                    self.expect(Tok::RParen)?;
                    let unary = |f: Func, b: Option<Expr>| match b {
                        None => Ok(Expr::Call(f, a.clone().into())),
                        Some(_) => Err(ParseError { position: at, message: format!("{name} takes one argument") }),
                    };
                    return match (name.as_str(), b) {
                        ("sqrt", b) => unary(Func::Sqrt, b),
                        ("exp", b) => unary(Func::Exp, b),
                        ("log" | "ln", b) => unary(Func::Log, b),
                        ("abs", b) => unary(Func::Abs, b),
                        ("max", Some(b)) => Ok(Expr::Max(a.into(), b.into())),
                        ("min", Some(b)) => Ok(Expr::Min(a.into(), b.into())),
                        ("max" | "min", None) => {
                            Err(ParseError { position: at, message: format!("{name} takes two arguments") })
                        }
                        _ => Err(ParseError { position: at, message: format!("unknown function '{name}'") }),
                    };
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Expr::Var(i));
                }
                match name.as_str() {
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    "e" => Ok(Expr::Const(std::f64::consts::E)),
                    _ => Err(ParseError { position: at, message: format!("unknown variable '{name}'") }),
                }
            }
            Some(t) => self.err(format!("unexpected token {t:?}")),
            None => self.err("unexpected end of expression"),
        }
    }
}

/// Parses `src` with variables named by `vars` (index = position in the slice).
pub fn parse(src: &str, vars: &[&str]) -> Result<Expr, ParseError> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0, vars, len: src.len() };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

fn c(v: f64) -> Expr {
    Expr::Const(v)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), _) if *x == 0.0 => b,
        (_, Expr::Const(y)) if *y == 0.0 => a,
        (Expr::Const(x), Expr::Const(y)) => c(x + y),
        _ => Expr::Add(a.into(), b.into()),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Expr::Const(y)) if *y == 0.0 => a,
        (Expr::Const(x), _) if *x == 0.0 => neg(b),
        (Expr::Const(x), Expr::Const(y)) => c(x - y),
        _ => Expr::Sub(a.into(), b.into()),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), _) | (_, Expr::Const(x)) if *x == 0.0 => c(0.0),
        (Expr::Const(x), _) if *x == 1.0 => b,
        (_, Expr::Const(y)) if *y == 1.0 => a,
        (Expr::Const(x), Expr::Const(y)) => c(x * y),
        _ => Expr::Mul(a.into(), b.into()),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), _) if *x == 0.0 => c(0.0),
        (_, Expr::Const(y)) if *y == 1.0 => a,
        _ => Expr::Div(a.into(), b.into()),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(x) => c(-x),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(other.into()),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, a.into())
}

impl Expr {
    pub fn eval<T: Real>(&self, vars: &[T]) -> T {
        match self {
            Expr::Const(v) => lit(*v),
            Expr::Var(i) => vars[*i],
            Expr::Neg(a) => -a.eval(vars),
            Expr::Add(a, b) => a.eval(vars) + b.eval(vars),
            Expr::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Expr::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Expr::Div(a, b) => a.eval(vars) / b.eval(vars),
            Expr::Pow(a, b) => {
                let base = a.eval(vars);
                match **b {
                    Expr::Const(k) if k.fract() == 0.0 && k.abs() < 64.0 => base.powi(k as i32),
                    _ => base.powf(b.eval(vars)),
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval::<T>(vars);
                match f {
                    Func::Sqrt => v.sqrt(),
                    Func::Exp => v.exp(),
                    Func::Log => v.ln(),
                    Func::Abs => v.abs(),
                    Func::Sign => {
                        if v > T::zero() {
                            T::one()
                        } else if v < T::zero() {
                            -T::one()
                        } else {
                            T::zero()
                        }
                    }
                    Func::Step => {
                        if v >= T::zero() {
                            T::one()
                        } else {
                            T::zero()
                        }
                    }
                }
            }
            Expr::Max(a, b) => a.eval::<T>(vars).max(b.eval(vars)),
            Expr::Min(a, b) => a.eval::<T>(vars).min(b.eval(vars)),
        }
    }

    /// Symbolic partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Expr {
        match self {
            Expr::Const(_) => c(0.0),
            Expr::Var(i) => c(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(var)),
            Expr::Add(a, b) => add(a.derivative(var), b.derivative(var)),
            Expr::Sub(a, b) => sub(a.derivative(var), b.derivative(var)),
            Expr::Mul(a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Expr::Div(a, b) => div(
                sub(mul(a.derivative(var), (**b).clone()), mul((**a).clone(), b.derivative(var))),
                Expr::Pow(b.clone(), c(2.0).into()),
            ),
            Expr::Pow(a, b) => {
                let da = a.derivative(var);
                if let Expr::Const(k) = **b {
                    if k == 0.0 {
                        return c(0.0);
                    }
                    let lowered = if k == 2.0 { (**a).clone() } else { Expr::Pow(a.clone(), c(k - 1.0).into()) };
                    return mul(mul(c(k), lowered), da);
                }
                let db = b.derivative(var);
                // d(a^b) = a^b (b' ln a + b a'/a)
                mul(
                    self.clone(),
                    add(mul(db, call(Func::Log, (**a).clone())), div(mul((**b).clone(), da), (**a).clone())),
                )
            }
            Expr::Call(f, a) => {
                let da = a.derivative(var);
                if matches!(da, Expr::Const(v) if v == 0.0) {
                    return c(0.0);
                }
                let inner = (**a).clone();
                match f {
                    Func::Sqrt => div(da, mul(c(2.0), self.clone())),
                    Func::Exp => mul(self.clone(), da),
                    Func::Log => div(da, inner),
                    Func::Abs => mul(call(Func::Sign, inner), da),
                    Func::Sign | Func::Step => c(0.0),
                }
            }
            Expr::Max(a, b) | Expr::Min(a, b) => {
                let (da, db) = (a.derivative(var), b.derivative(var));
                let gap = if matches!(self, Expr::Max(..)) {
                    sub((**a).clone(), (**b).clone())
                } else {
                    sub((**b).clone(), (**a).clone())
                };
                let sel = call(Func::Step, gap);
                add(mul(sel.clone(), da), mul(sub(c(1.0), sel), db))
            }
        }
    }

    pub fn gradient(&self, n: usize) -> Vec<Expr> {
        (0..n).map(|i| self.derivative(i)).collect()
    }
}

/// Standard variable names for an `n`-dimensional field: `x1..xn`, plus
/// `x, y, z` aliases when `n <= 3`.
pub fn coordinate_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

/// Parses a field expression accepting `x1..xn` and, for `n <= 3`, `x y z`.
pub fn parse_field_expr(src: &str, n: usize) -> Result<Expr, ParseError> {
    let names = coordinate_names(n);
    let mut refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let aliases = ["x", "y", "z"];
    let canonical = parse(src, &refs);
    if canonical.is_ok() || n > 3 {
        return canonical;
    }
    refs = aliases[..n].to_vec();
    match parse(src, &refs) {
        Ok(e) => Ok(e),
        Err(_) => canonical,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(e: &Expr, x: &[f64], i: usize) -> f64 {
        let h = 1e-6;
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        (e.eval(&xp) - e.eval(&xm)) / (2.0 * h)
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = parse("-x^2 + 2*x*y - 3/4", &["x", "y"]).unwrap();
        assert_eq!(e.eval(&[3.0, 0.5]), -9.0 + 3.0 - 0.75);
        let p = parse("2^3^2", &[]).unwrap();
        assert_eq!(p.eval::<f64>(&[]), 512.0);
    }

    #[test]
    fn symbolic_gradient_matches_finite_differences() {
        let src = "x1^2*exp(x2) + sqrt(1 + x1^2 + x2^2) - log(2 + x2) + abs(x1 - 0.3) + max(x1, x2)^2 + x1^x2";
        let e = parse_field_expr(src, 2).unwrap();
        let x = [0.7, 0.4];
        for i in 0..2 {
            let d = e.derivative(i).eval(&x);
            assert!((d - fd(&e, &x, i)).abs() < 1e-7, "component {i}: {d} vs {}", fd(&e, &x, i));
        }
    }

    #[test]
    fn aliases_resolve_for_low_dimension() {
        let e = parse_field_expr("x^2 + y^2", 2).unwrap();
        assert_eq!(e.eval(&[1.0, 2.0]), 5.0);
        assert!(parse_field_expr("w + 1", 2).is_err());
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse("1 + (x *", &["x"]).unwrap_err();
        assert!(err.to_string().contains("column"));
        assert!(parse("foo(1)", &[]).is_err());
        assert!(parse("max(1)", &[]).is_err());
    }
}
