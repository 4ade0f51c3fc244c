//! Analytic expressions used to define functional inputs, e.g. `1 + sin(0.3*x1 + 0.4*x2)`.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          // right-associative
//! primary := number | var | func '(' expr ')' | '(' expr ')'
//! var     := 'x' digits                     // x1, x2, ...
//! func    := sin | cos | exp | sqrt | abs
//! ```
//!
//! `^` binds tighter than unary minus, so `-x1^2` is `-(x1^2)`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 5] = [Func::Sin, Func::Cos, Func::Exp, Func::Sqrt, Func::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Sqrt => x.sqrt(),
            Func::Abs => x.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => " + ",
            BinOp::Sub => " - ",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

/// Expression tree. Variables are zero-based (`x1` is `Var(0)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

const PREC_NEG: u8 = 3;
const PREC_ATOM: u8 = 5;

impl Expr {
    pub fn parse(text: &str) -> Result<Expr> {
        parse_expression(text)
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => PREC_ATOM,
            Expr::Neg(_) => PREC_NEG,
            Expr::Binary(op, ..) => op.precedence(),
        }
    }

    /// Evaluates at `point`; variables beyond `point.len()` evaluate to NaN.
    pub fn eval(&self, point: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => point.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Neg(e) => -e.eval(point),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(point), b.eval(point));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(f, e) => f.apply(e.eval(point)),
        }
    }

    /// Number of coordinates the expression needs (1 + highest variable index).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Num(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(e) | Expr::Call(_, e) => e.arity(),
            Expr::Binary(_, a, b) => a.arity().max(b.arity()),
        }
    }
}

fn pow(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_child(f, e, e.precedence() < PREC_NEG)
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                let (left_paren, right_paren) = if *op == BinOp::Pow {
                    // base must be atomic; the exponent may be any unary
                    (a.precedence() <= p, b.precedence() < PREC_NEG)
                } else {
                    (a.precedence() < p, b.precedence() <= p)
                };
                write_child(f, a, left_paren)?;
                f.write_str(op.symbol())?;
                write_child(f, b, right_paren)
            }
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool) -> fmt::Result {
    if paren {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Parses `text` into an [`Expr`]; errors carry the byte offset of the problem.
pub fn parse_expression(text: &str) -> Result<Expr> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    if p.pos == p.src.len() {
        return Err(p.error("empty expression"));
    }
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        let msg = if p.src[p.pos] == b')' {
            "unbalanced parentheses: unexpected `)`"
        } else {
            "unexpected trailing input"
        };
        return Err(p.error(msg));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let exponent = self.unary()?;
            Ok(Expr::binary(BinOp::Pow, base, exponent))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                let open = self.pos;
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(Error::Parse {
                        offset: open,
                        message: "unbalanced parentheses: missing `)`".into(),
                    });
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(c) => Err(self.error(format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&s[start..i]).expect("ascii slice");
        let value: f64 = text
            .parse()
            .map_err(|_| self.error(format!("invalid number `{text}`")))?;
        self.pos = i;
        Ok(Expr::Num(value))
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && s[i].is_ascii_alphanumeric() {
            i += 1;
        }
        let name = std::str::from_utf8(&s[start..i]).expect("ascii slice");
        if let Some(index) = variable_index(name) {
            self.pos = i;
            return Ok(Expr::Var(index));
        }
        if let Some(func) = Func::from_name(name) {
            self.pos = i;
            if self.peek() != Some(b'(') {
                return Err(self.error(format!("expected `(` after `{name}`")));
            }
            let arg = self.primary()?;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        Err(self.error(format!("unknown identifier `{name}`")))
    }
}

fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0')
    {
        return None;
    }
    digits.parse::<usize>().ok().map(|k| k - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    #[test]
    fn precedence_of_mul_over_add() {
        let e = parse_expression("1+x1*x2").unwrap();
        assert_eq!(
            e,
            Expr::binary(
                BinOp::Add,
                num(1.0),
                Expr::binary(BinOp::Mul, Expr::Var(0), Expr::Var(1))
            )
        );
    }

    #[test]
    fn power_is_right_associative_and_binds_tighter_than_neg() {
        let e = parse_expression("-2^3^2").unwrap();
        let expected = Expr::Neg(Box::new(Expr::binary(
            BinOp::Pow,
            num(2.0),
            Expr::binary(BinOp::Pow, num(3.0), num(2.0)),
        )));
        assert_eq!(e, expected);
        assert_eq!(e.eval(&[]), -512.0);
        assert_eq!(parse_expression("2^-1").unwrap().eval(&[]), 0.5);
    }

    #[test]
    fn trig_argument_evaluates_to_zero_at_origin() {
        let e = parse_expression("sin(0.3*x1+0.4*x2)").unwrap();
        assert_eq!(e.eval(&[0.0, 0.0]), 0.0);
        assert_eq!(e.arity(), 2);
    }

    #[test]
    fn table_inputs_parse() {
        for text in [
            "x1+x2",
            "x1^2",
            "x2^2",
            "1+x1",
            "1+x2",
            "1+x1*x2",
            "sin(x1)",
            "cos(x1+x2)",
            "0.5 + x1^2 + x2^3",
            "exp(-0.7*x1*x2)",
            "1 - sin(x2)",
        ] {
            parse_expression(text).unwrap_or_else(|e| panic!("{text}: {e}"));
        }
    }

    #[test]
    fn errors_report_offsets() {
        assert!(matches!(
            parse_expression(""),
            Err(Error::Parse { offset: 0, .. })
        ));
        assert!(matches!(
            parse_expression("   "),
            Err(Error::Parse { offset: 3, .. })
        ));
        assert!(matches!(
            parse_expression("1 + y"),
            Err(Error::Parse { offset: 4, .. })
        ));
        assert!(matches!(
            parse_expression("tan(x1)"),
            Err(Error::Parse { offset: 0, .. })
        ));
        assert!(matches!(
            parse_expression("(1 + x1"),
            Err(Error::Parse { offset: 0, .. })
        ));
        assert!(matches!(
            parse_expression("1 + x1)"),
            Err(Error::Parse { offset: 6, .. })
        ));
        assert!(parse_expression("x0").is_err());
        assert!(parse_expression("1 +").is_err());
    }

    #[test]
    fn printing_uses_minimal_parentheses() {
        let cases = [
            ("1 - (x1 - x2)", "1 - (x1 - x2)"),
            ("(1 - x1) - x2", "1 - x1 - x2"),
            ("(-x1)^2", "(-x1)^2"),
            ("-x1^2", "-x1^2"),
            ("x1 - -x2", "x1 - -x2"),
            ("2^(3^x1)", "2^3^x1"),
            ("(2^3)^x1", "(2^3)^x1"),
            ("(x1+1)*x2", "(x1 + 1)*x2"),
        ];
        for (input, printed) in cases {
            assert_eq!(parse_expression(input).unwrap().to_string(), printed);
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..1e3).prop_map(Expr::Num),
            (0usize..3).prop_map(Expr::Var),
        ];
        leaf.prop_recursive(6, 64, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| Expr::binary(op, a, b)),
                (0usize..5, inner).prop_map(|(k, e)| Expr::Call(Func::ALL[k], Box::new(e))),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn print_then_parse_round_trips(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = parse_expression(&printed).unwrap();
            prop_assert_eq!(reparsed, e);
        }
    }
}
