//! Closed-form scalar expressions in `u`, `v` (and the one-variable argument `s`).
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr  := term (("+" | "-") term)*
//! term  := unary (("*" | "/") unary)*
//! unary := "-" unary | power
//! power := atom ("^" unary)?          right-associative
//! atom  := number | ident | func "(" expr ")" | "(" expr ")"
//! ```
//!
//! `pi` is a constant and `i` is the imaginary unit (complex evaluation only).

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Log,
    Sqrt,
    Atan,
    Abs,
}

impl Func {
    const ALL: [Func; 11] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Sinh,
        Func::Cosh,
        Func::Tanh,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Atan,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Atan => "atan",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn all() -> &'static [Func] {
        &Self::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Parse tree node. `offset` is the byte position in the source it came from; it is
/// ignored by equality.
#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub offset: usize,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (&self.kind, &other.kind) {
            (ExprKind::Num(a), ExprKind::Num(b)) => a.to_bits() == b.to_bits(),
            (ExprKind::Var(a), ExprKind::Var(b)) => a == b,
            (ExprKind::Neg(a), ExprKind::Neg(b)) => a == b,
            (ExprKind::Bin(o1, a1, b1), ExprKind::Bin(o2, a2, b2)) => o1 == o2 && a1 == a2 && b1 == b2,
            (ExprKind::Call(f1, a1), ExprKind::Call(f2, a2)) => f1 == f2 && a1 == a2,
            _ => false,
        }
    }
}

/// Identifiers accepted by [`parse_expr`].
pub const DEFAULT_VARS: &[&str] = &["u", "v", "s", "i"];

/// Parses with the default identifier set `u`, `v`, `s`, `i`.
pub fn parse_expr(source: &str) -> Result<Expr> {
    parse_expr_with(source, DEFAULT_VARS)
}

/// Parses, accepting exactly the identifiers in `vars` (plus `pi`).
pub fn parse_expr_with(source: &str, vars: &[&str]) -> Result<Expr> {
    let mut p = Parser { src: source, pos: 0, vars };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < source.len() {
        return Err(p.error(format!("unexpected '{}'", p.peek_char().unwrap_or(' '))));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse { offset: self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek_char() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek_char() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            let at = self.pos;
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr { kind: ExprKind::Bin(op, Box::new(lhs), Box::new(rhs)), offset: at };
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            self.skip_ws();
            let at = self.pos;
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr { kind: ExprKind::Bin(op, Box::new(lhs), Box::new(rhs)), offset: at };
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        self.skip_ws();
        let at = self.pos;
        if self.eat('-') {
            let inner = self.unary()?;
            return Ok(Expr { kind: ExprKind::Neg(Box::new(inner)), offset: at });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        self.skip_ws();
        let at = self.pos;
        if self.eat('^') {
            let exponent = self.unary()?;
            return Ok(Expr {
                kind: ExprKind::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)),
                offset: at,
            });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        let at = self.pos;
        match self.peek_char() {
            None => Err(self.error("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let start = self.pos;
                while let Some(c) = self.peek_char() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let name = &self.src[start..self.pos];
                self.skip_ws();
                if self.peek_char() == Some('(') {
                    let func = Func::from_name(name).ok_or(Error::Parse {
                        offset: start,
                        message: format!("unknown function '{name}'"),
                    })?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return Err(self.error("expected ')'"));
                    }
                    return Ok(Expr { kind: ExprKind::Call(func, Box::new(arg)), offset: at });
                }
                if name == "pi" {
                    return Ok(Expr { kind: ExprKind::Num(PI), offset: at });
                }
                if self.vars.contains(&name) {
                    Ok(Expr { kind: ExprKind::Var(name.to_string()), offset: at })
                } else {
                    Err(Error::Parse { offset: start, message: format!("unknown identifier '{name}'") })
                }
            }
            Some(c) => Err(self.error(format!("unexpected '{c}'"))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let digits = |p: &mut usize| {
            let s = *p;
            while *p < bytes.len() && bytes[*p].is_ascii_digit() {
                *p += 1;
            }
            *p - s
        };
        let mut p = self.pos;
        let mut n = digits(&mut p);
        if p < bytes.len() && bytes[p] == b'.' {
            p += 1;
            n += digits(&mut p);
        }
        if n == 0 {
            return Err(self.error("malformed number"));
        }
        if p < bytes.len() && (bytes[p] == b'e' || bytes[p] == b'E') {
            let mut q = p + 1;
            if q < bytes.len() && (bytes[q] == b'+' || bytes[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) == 0 {
                self.pos = q;
                return Err(self.error("malformed exponent"));
            }
            p = q;
        }
        let text = &self.src[start..p];
        let value: f64 = text
            .parse()
            .map_err(|_| Error::Parse { offset: start, message: format!("malformed number '{text}'") })?;
        if !value.is_finite() {
            return Err(Error::Parse { offset: start, message: format!("number '{text}' overflows") });
        }
        self.pos = p;
        Ok(Expr { kind: ExprKind::Num(value), offset: start })
    }
}

impl fmt::Display for Expr {
    /// Canonical, fully parenthesized form; parsing it yields an equal tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Num(x) if *x < 0.0 => write!(f, "(-{:?})", -x),
            ExprKind::Num(x) => write!(f, "{x:?}"),
            ExprKind::Var(name) => write!(f, "{name}"),
            ExprKind::Neg(a) => write!(f, "(-{a})"),
            ExprKind::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            ExprKind::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

fn eval_error(offset: usize, message: impl Into<String>) -> Error {
    Error::Eval { offset, message: message.into() }
}

fn lookup<T: Copy>(vars: &[(&str, T)], name: &str) -> Option<T> {
    vars.iter().find(|(n, _)| *n == name).map(|(_, x)| *x)
}

impl Expr {
    fn num(x: f64) -> Expr {
        Expr { kind: ExprKind::Num(x), offset: 0 }
    }

    /// Evaluates at `(u, v)`.
    pub fn eval_uv(&self, u: f64, v: f64) -> Result<f64> {
        self.eval(&[("u", u), ("v", v)])
    }

    /// Evaluates with real bindings. Domain violations report the byte offset of the operation.
    pub fn eval(&self, vars: &[(&str, f64)]) -> Result<f64> {
        let out = match &self.kind {
            ExprKind::Num(x) => *x,
            ExprKind::Var(name) if name == "i" => {
                return Err(eval_error(self.offset, "imaginary unit in a real expression"))
            }
            ExprKind::Var(name) => lookup(vars, name)
                .ok_or_else(|| eval_error(self.offset, format!("unbound variable '{name}'")))?,
            ExprKind::Neg(a) => -a.eval(vars)?,
            ExprKind::Bin(op, a, b) => {
                let x = a.eval(vars)?;
                let y = b.eval(vars)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(eval_error(self.offset, "division by zero"));
                        }
                        x / y
                    }
                    BinOp::Pow => {
                        let r = x.powf(y);
                        if r.is_nan() {
                            return Err(eval_error(self.offset, format!("{x}^{y} is undefined")));
                        }
                        r
                    }
                }
            }
            ExprKind::Call(func, a) => {
                let x = a.eval(vars)?;
                match func {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => x.tan(),
                    Func::Sinh => x.sinh(),
                    Func::Cosh => x.cosh(),
                    Func::Tanh => x.tanh(),
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(eval_error(self.offset, format!("log of non-positive {x}")));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(eval_error(self.offset, format!("sqrt of negative {x}")));
                        }
                        x.sqrt()
                    }
                    Func::Atan => x.atan(),
                    Func::Abs => x.abs(),
                }
            }
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(eval_error(self.offset, "non-finite result"))
        }
    }

    /// Evaluates with complex bindings; `i` is the imaginary unit.
    pub fn eval_complex(&self, vars: &[(&str, Complex64)]) -> Result<Complex64> {
        let out = match &self.kind {
            ExprKind::Num(x) => Complex64::new(*x, 0.0),
            ExprKind::Var(name) => match lookup(vars, name) {
                Some(z) => z,
                None if name == "i" => Complex64::i(),
                None => return Err(eval_error(self.offset, format!("unbound variable '{name}'"))),
            },
            ExprKind::Neg(a) => -a.eval_complex(vars)?,
            ExprKind::Bin(op, a, b) => {
                let x = a.eval_complex(vars)?;
                let y = b.eval_complex(vars)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == Complex64::new(0.0, 0.0) {
                            return Err(eval_error(self.offset, "division by zero"));
                        }
                        x / y
                    }
                    BinOp::Pow => {
                        if y.im == 0.0 && y.re.fract() == 0.0 && y.re.abs() <= i32::MAX as f64 {
                            x.powi(y.re as i32)
                        } else if x == Complex64::new(0.0, 0.0) {
                            return Err(eval_error(self.offset, "non-integer power of zero"));
                        } else {
                            x.powc(y)
                        }
                    }
                }
            }
            ExprKind::Call(func, a) => {
                let z = a.eval_complex(vars)?;
                match func {
                    Func::Sin => z.sin(),
                    Func::Cos => z.cos(),
                    Func::Tan => z.tan(),
                    Func::Sinh => z.sinh(),
                    Func::Cosh => z.cosh(),
                    Func::Tanh => z.tanh(),
                    Func::Exp => z.exp(),
                    Func::Log => {
                        if z == Complex64::new(0.0, 0.0) {
                            return Err(eval_error(self.offset, "log of zero"));
                        }
                        z.ln()
                    }
                    Func::Sqrt => z.sqrt(),
                    Func::Atan => z.atan(),
                    Func::Abs => Complex64::new(z.norm(), 0.0),
                }
            }
        };
        if out.re.is_finite() && out.im.is_finite() {
            Ok(out)
        } else {
            Err(eval_error(self.offset, "non-finite result"))
        }
    }

    /// Whether `name` occurs in the tree.
    pub fn mentions(&self, name: &str) -> bool {
        match &self.kind {
            ExprKind::Num(_) => false,
            ExprKind::Var(n) => n == name,
            ExprKind::Neg(a) | ExprKind::Call(_, a) => a.mentions(name),
            ExprKind::Bin(_, a, b) => a.mentions(name) || b.mentions(name),
        }
    }

    /// Replaces every occurrence of variable `name` by `with`.
    pub fn substitute(&self, name: &str, with: &Expr) -> Expr {
        let kind = match &self.kind {
            ExprKind::Var(n) if n == name => return with.clone(),
            ExprKind::Num(_) | ExprKind::Var(_) => return self.clone(),
            ExprKind::Neg(a) => ExprKind::Neg(Box::new(a.substitute(name, with))),
            ExprKind::Call(f, a) => ExprKind::Call(*f, Box::new(a.substitute(name, with))),
            ExprKind::Bin(op, a, b) => {
                ExprKind::Bin(*op, Box::new(a.substitute(name, with)), Box::new(b.substitute(name, with)))
            }
        };
        Expr { kind, offset: self.offset }
    }

    /// Symbolic partial derivative with respect to `var`, lightly simplified.
    pub fn diff(&self, var: &str) -> Expr {
        use ExprKind::*;
        match &self.kind {
            Num(_) => Expr::num(0.0),
            Var(n) => Expr::num(if n == var { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(var)),
            Bin(BinOp::Add, a, b) => add(a.diff(var), b.diff(var)),
            Bin(BinOp::Sub, a, b) => sub(a.diff(var), b.diff(var)),
            Bin(BinOp::Mul, a, b) => add(mul(a.diff(var), (**b).clone()), mul((**a).clone(), b.diff(var))),
            Bin(BinOp::Div, a, b) => div(
                sub(mul(a.diff(var), (**b).clone()), mul((**a).clone(), b.diff(var))),
                pow((**b).clone(), Expr::num(2.0)),
            ),
            Bin(BinOp::Pow, a, b) => {
                if !b.mentions(var) {
                    let reduced = match b.kind {
                        Num(c) => Expr::num(c - 1.0),
                        _ => sub((**b).clone(), Expr::num(1.0)),
                    };
                    mul(mul((**b).clone(), pow((**a).clone(), reduced)), a.diff(var))
                } else {
                    let log_a = call(Func::Log, (**a).clone());
                    mul(
                        self.clone(),
                        add(mul(b.diff(var), log_a), div(mul((**b).clone(), a.diff(var)), (**a).clone())),
                    )
                }
            }
            Call(func, a) => {
                let x = (**a).clone();
                let outer = match func {
                    Func::Sin => call(Func::Cos, x),
                    Func::Cos => neg(call(Func::Sin, x)),
                    Func::Tan => add(Expr::num(1.0), pow(call(Func::Tan, x), Expr::num(2.0))),
                    Func::Sinh => call(Func::Cosh, x),
                    Func::Cosh => call(Func::Sinh, x),
                    Func::Tanh => sub(Expr::num(1.0), pow(call(Func::Tanh, x), Expr::num(2.0))),
                    Func::Exp => call(Func::Exp, x),
                    Func::Log => div(Expr::num(1.0), x),
                    Func::Sqrt => div(Expr::num(0.5), call(Func::Sqrt, x)),
                    Func::Atan => div(Expr::num(1.0), add(Expr::num(1.0), pow(x, Expr::num(2.0)))),
                    Func::Abs => div(x, call(Func::Abs, (**a).clone())),
                };
                mul(outer, a.diff(var))
            }
        }
    }
}

fn is_num(e: &Expr, x: f64) -> bool {
    matches!(e.kind, ExprKind::Num(y) if y == x)
}

fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    Expr { kind: ExprKind::Bin(op, Box::new(a), Box::new(b)), offset: 0 }
}

fn call(f: Func, a: Expr) -> Expr {
    Expr { kind: ExprKind::Call(f, Box::new(a)), offset: 0 }
}

fn neg(a: Expr) -> Expr {
    match a.kind {
        ExprKind::Num(x) => Expr::num(-x),
        ExprKind::Neg(inner) => *inner,
        _ => Expr { kind: ExprKind::Neg(Box::new(a)), offset: 0 },
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) {
        b
    } else if is_num(&b, 0.0) {
        a
    } else {
        bin(BinOp::Add, a, b)
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    if is_num(&b, 0.0) {
        a
    } else if is_num(&a, 0.0) {
        neg(b)
    } else {
        bin(BinOp::Sub, a, b)
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) || is_num(&b, 0.0) {
        Expr::num(0.0)
    } else if is_num(&a, 1.0) {
        b
    } else if is_num(&b, 1.0) {
        a
    } else {
        bin(BinOp::Mul, a, b)
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) {
        Expr::num(0.0)
    } else if is_num(&b, 1.0) {
        a
    } else {
        bin(BinOp::Div, a, b)
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    if is_num(&b, 1.0) {
        a
    } else if is_num(&b, 0.0) {
        Expr::num(1.0)
    } else {
        bin(BinOp::Pow, a, b)
    }
}

/// An expression together with its first and second partial derivatives in `u` and `v`.
#[derive(Debug, Clone)]
pub struct ExprJet {
    pub value: Expr,
    pub du: Expr,
    pub dv: Expr,
    pub duu: Expr,
    pub duv: Expr,
    pub dvv: Expr,
}

impl ExprJet {
    pub fn new(value: Expr) -> Self {
        let du = value.diff("u");
        let dv = value.diff("v");
        let duu = du.diff("u");
        let duv = du.diff("v");
        let dvv = dv.diff("v");
        Self { value, du, dv, duu, duv, dvv }
    }

    pub fn parse(source: &str) -> Result<Self> {
        Ok(Self::new(parse_expr(source)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_examples() {
        let e = parse_expr("2*u^2").unwrap();
        assert_eq!(e.to_string(), "(2.0 * (u ^ 2.0))");
        let e = parse_expr("-u^2").unwrap();
        assert_eq!(e.eval_uv(3.0, 0.0).unwrap(), -9.0);
        let e = parse_expr("2^3^2").unwrap();
        assert_eq!(e.eval_uv(0.0, 0.0).unwrap(), 512.0);
        let e = parse_expr("-sin(u)").unwrap();
        assert!(matches!(e.kind, ExprKind::Neg(_)));
    }

    #[test]
    fn error_offsets() {
        match parse_expr("u + foo") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
        match parse_expr("u + (v") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("{other:?}"),
        }
        match parse_expr("1 + log(u)").unwrap().eval_uv(-1.0, 0.0) {
            Err(Error::Eval { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn symbolic_derivative_matches_difference_quotient() {
        let e = parse_expr("sin(u*v) + exp(u)/(1+v^2) - sqrt(2+u^2)*atan(v)").unwrap();
        let d = e.diff("u");
        let (u, v, h) = (0.3, -0.7, 1e-6);
        let fd = (e.eval_uv(u + h, v).unwrap() - e.eval_uv(u - h, v).unwrap()) / (2.0 * h);
        assert!((d.eval_uv(u, v).unwrap() - fd).abs() < 1e-8);
    }

    #[test]
    fn complex_unit() {
        let e = parse_expr("u + i*v").unwrap();
        let z = e.eval_complex(&[("u", Complex64::new(1.0, 0.0)), ("v", Complex64::new(2.0, 0.0))]).unwrap();
        assert_eq!(z, Complex64::new(1.0, 2.0));
        assert!(e.eval_uv(1.0, 2.0).is_err());
    }
}
