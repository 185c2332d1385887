//! Scalar expressions in `x` and `y`: parsing, evaluation, symbolic
//! differentiation and light simplification.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Atan,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Atan => "atan",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "atan" => Func::Atan,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: expected {}", expected.join(" or "))]
    Syntax { offset: usize, expected: Vec<String> },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdent { offset: usize, name: String },
    #[error("exponent at offset {offset} is not an integer constant")]
    NonIntegerExponent { offset: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivByZero,
    #[error("sqrt of negative argument {0}")]
    SqrtNegative(f64),
    #[error("log of non-positive argument {0}")]
    LogNonPositive(f64),
    #[error("non-finite result")]
    NonFinite,
}

impl Expr {
    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }
    pub fn x() -> Expr {
        Expr::Var(Var::X)
    }
    pub fn y() -> Expr {
        Expr::Var(Var::Y)
    }

    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        let mut p = Parser { src: text.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.syntax(&["operator", "end of input"]));
        }
        Ok(e)
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Add(a, b) => a.eval(x, y)? + b.eval(x, y)?,
            Expr::Sub(a, b) => a.eval(x, y)? - b.eval(x, y)?,
            Expr::Mul(a, b) => a.eval(x, y)? * b.eval(x, y)?,
            Expr::Div(a, b) => {
                let d = b.eval(x, y)?;
                if d == 0.0 {
                    return Err(EvalError::DivByZero);
                }
                a.eval(x, y)? / d
            }
            Expr::Neg(a) => -a.eval(x, y)?,
            Expr::Pow(a, n) => {
                let b = a.eval(x, y)?;
                if *n < 0 && b == 0.0 {
                    return Err(EvalError::DivByZero);
                }
                b.powi(*n)
            }
            Expr::Call(f, a) => {
                let u = a.eval(x, y)?;
                match f {
                    Func::Sin => u.sin(),
                    Func::Cos => u.cos(),
                    Func::Exp => u.exp(),
                    Func::Atan => u.atan(),
                    Func::Sqrt => {
                        if u < 0.0 {
                            return Err(EvalError::SqrtNegative(u));
                        }
                        u.sqrt()
                    }
                    Func::Log => {
                        if u <= 0.0 {
                            return Err(EvalError::LogNonPositive(u));
                        }
                        u.ln()
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Symbolic partial derivative. The result is not simplified.
    pub fn diff(&self, v: Var) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            Var(w) => Const(if *w == v { 1.0 } else { 0.0 }),
            Add(a, b) => Add(bx(a.diff(v)), bx(b.diff(v))),
            Sub(a, b) => Sub(bx(a.diff(v)), bx(b.diff(v))),
            Mul(a, b) => Add(
                bx(Mul(bx(a.diff(v)), b.clone())),
                bx(Mul(a.clone(), bx(b.diff(v)))),
            ),
            Div(a, b) => Div(
                bx(Sub(
                    bx(Mul(bx(a.diff(v)), b.clone())),
                    bx(Mul(a.clone(), bx(b.diff(v)))),
                )),
                bx(Pow(b.clone(), 2)),
            ),
            Neg(a) => Neg(bx(a.diff(v))),
            Pow(a, n) => {
                if *n == 0 {
                    Const(0.0)
                } else {
                    Mul(
                        bx(Mul(bx(Const(*n as f64)), bx(Pow(a.clone(), n - 1)))),
                        bx(a.diff(v)),
                    )
                }
            }
            Call(f, a) => {
                let outer = match f {
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => Neg(bx(Call(Func::Sin, a.clone()))),
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Log => Div(bx(Const(1.0)), a.clone()),
                    Func::Sqrt => Div(
                        bx(Const(1.0)),
                        bx(Mul(bx(Const(2.0)), bx(Call(Func::Sqrt, a.clone())))),
                    ),
                    Func::Atan => Div(
                        bx(Const(1.0)),
                        bx(Add(bx(Const(1.0)), bx(Pow(a.clone(), 2)))),
                    ),
                };
                Mul(bx(outer), bx(a.diff(v)))
            }
        }
    }

    /// Constant folding and the 0/1 identities.
    pub fn simplify(&self) -> Expr {
        use Expr::*;
        match self {
            Const(_) | Var(_) => self.clone(),
            Add(a, b) => match (a.simplify(), b.simplify()) {
                (Const(p), Const(q)) => Const(p + q),
                (Const(z), e) | (e, Const(z)) if z == 0.0 => e,
                (p, q) => Add(bx(p), bx(q)),
            },
            Sub(a, b) => match (a.simplify(), b.simplify()) {
                (Const(p), Const(q)) => Const(p - q),
                (e, Const(z)) if z == 0.0 => e,
                (Const(z), e) if z == 0.0 => Neg(bx(e)).simplify(),
                (p, q) => Sub(bx(p), bx(q)),
            },
            Mul(a, b) => match (a.simplify(), b.simplify()) {
                (Const(p), Const(q)) => Const(p * q),
                (Const(z), _) | (_, Const(z)) if z == 0.0 => Const(0.0),
                (Const(o), e) | (e, Const(o)) if o == 1.0 => e,
                (p, q) => Mul(bx(p), bx(q)),
            },
            Div(a, b) => match (a.simplify(), b.simplify()) {
                (Const(p), Const(q)) if q != 0.0 => Const(p / q),
                (Const(z), _) if z == 0.0 => Const(0.0),
                (e, Const(o)) if o == 1.0 => e,
                (p, q) => Div(bx(p), bx(q)),
            },
            Neg(a) => match a.simplify() {
                Const(p) => Const(-p),
                Neg(e) => *e,
                e => Neg(bx(e)),
            },
            Pow(a, n) => match (a.simplify(), *n) {
                (_, 0) => Const(1.0),
                (e, 1) => e,
                (Const(p), n) if p != 0.0 || n > 0 => Const(p.powi(n)),
                (e, n) => Pow(bx(e), n),
            },
            Call(f, a) => {
                let s = a.simplify();
                if let Const(_) = s {
                    if let Ok(v) = Call(*f, bx(s.clone())).eval(0.0, 0.0) {
                        return Const(v);
                    }
                }
                Call(*f, bx(s))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }
}

fn bx(e: Expr) -> Box<Expr> {
    Box::new(e)
}

/// Fully parenthesised output so that re-parsing reproduces the tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "({:?})", c)
                } else {
                    write!(f, "{:?}", c)
                }
            }
            Expr::Var(Var::X) => write!(f, "x"),
            Expr::Var(Var::Y) => write!(f, "y"),
            Expr::Add(a, b) => write!(f, "({} + {})", a, b),
            Expr::Sub(a, b) => write!(f, "({} - {})", a, b),
            Expr::Mul(a, b) => write!(f, "({} * {})", a, b),
            Expr::Div(a, b) => write!(f, "({} / {})", a, b),
            Expr::Neg(a) => match **a {
                Expr::Const(_) => write!(f, "(-({}))", a),
                _ => write!(f, "(-{})", a),
            },
            Expr::Pow(a, n) => {
                if *n < 0 {
                    write!(f, "({}^({}))", a, n)
                } else {
                    write!(f, "({}^{})", a, n)
                }
            }
            Expr::Call(func, a) => write!(f, "{}({})", func.name(), a),
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn syntax(&self, expected: &[&str]) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(bx(lhs), bx(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(bx(lhs), bx(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.power()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(bx(lhs), bx(self.power()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(bx(lhs), bx(self.power()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // Right associative; the exponent must fold to an integer constant.
    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.unary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let at = self.pos;
            let exp = self.power()?;
            let n = match exp.simplify() {
                Expr::Const(c) if c.fract() == 0.0 && c.abs() <= i32::MAX as f64 => c as i32,
                _ => return Err(ParseError::NonIntegerExponent { offset: at }),
            };
            return Ok(Expr::Pow(bx(base), n));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            // A minus directly in front of a literal is part of the literal.
            if self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit() || *c == b'.') {
                if let Expr::Const(c) = self.number()? {
                    return Ok(Expr::Const(-c));
                }
            }
            return Ok(Expr::Neg(bx(self.unary()?)));
        }
        self.primary()
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            let b = *p;
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
            *p > b
        };
        let mut p = self.pos;
        let int = digits(&mut p);
        let mut frac = false;
        if p < s.len() && s[p] == b'.' {
            p += 1;
            frac = digits(&mut p);
        }
        if !int && !frac {
            self.pos = start;
            return Err(self.syntax(&["number"]));
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) {
                p = q;
            } else {
                self.pos = q;
                return Err(self.syntax(&["exponent digits"]));
            }
        }
        self.pos = p;
        let text = std::str::from_utf8(&s[start..p]).expect("ascii slice");
        Ok(Expr::Const(text.parse().expect("validated literal")))
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.syntax(&[")"]));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                match name {
                    "x" => Ok(Expr::Var(Var::X)),
                    "y" => Ok(Expr::Var(Var::Y)),
                    _ => {
                        let Some(f) = Func::from_name(name) else {
                            return Err(ParseError::UnknownIdent {
                                offset: start,
                                name: name.to_string(),
                            });
                        };
                        if self.peek() != Some(b'(') {
                            return Err(self.syntax(&["("]));
                        }
                        self.pos += 1;
                        let arg = self.expr()?;
                        if self.peek() != Some(b')') {
                            return Err(self.syntax(&[")"]));
                        }
                        self.pos += 1;
                        Ok(Expr::Call(f, bx(arg)))
                    }
                }
            }
            _ => Err(self.syntax(&["number", "identifier", "("])),
        }
    }
}

/// An expression together with its simplified partial derivatives up to
/// third order, indexed by the multi-index `(nx, ny)`.
#[derive(Debug, Clone)]
pub struct ExprJet {
    derivs: Vec<Expr>,
    order: usize,
}

fn jet_index(nx: usize, ny: usize) -> usize {
    let d = nx + ny;
    d * (d + 1) / 2 + ny
}

impl ExprJet {
    pub fn new(e: &Expr, order: usize) -> ExprJet {
        let mut derivs = vec![e.simplify()];
        for d in 1..=order {
            for ny in 0..=d {
                let nx = d - ny;
                let prev = if nx > 0 {
                    derivs[jet_index(nx - 1, ny)].diff(Var::X)
                } else {
                    derivs[jet_index(nx, ny - 1)].diff(Var::Y)
                };
                derivs.push(prev.simplify());
            }
        }
        ExprJet { derivs, order }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn expr(&self, nx: usize, ny: usize) -> &Expr {
        &self.derivs[jet_index(nx, ny)]
    }

    /// All derivatives up to the jet order at a point, in `(nx, ny)` graded order.
    pub fn eval_all(&self, x: f64, y: f64) -> Result<Vec<f64>, EvalError> {
        self.derivs.iter().map(|e| e.eval(x, y)).collect()
    }

    pub fn eval(&self, nx: usize, ny: usize, x: f64, y: f64) -> Result<f64, EvalError> {
        self.expr(nx, ny).eval(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sum_of_power() {
        let e = Expr::parse("x^2+y").unwrap();
        assert_eq!(
            e,
            Expr::Add(bx(Expr::Pow(bx(Expr::x()), 2)), bx(Expr::y()))
        );
    }

    #[test]
    fn graph_function_value() {
        let e = Expr::parse("1/2*(x^2+y^2) - 1/12*(x^4+y^4)").unwrap();
        assert!((e.eval(1.0, 1.0).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        let fx = e.diff(Var::X);
        assert!((fx.eval(1.0, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unbalanced_paren_reports_offset() {
        match Expr::parse("sin(x") {
            Err(ParseError::Syntax { offset, expected }) => {
                assert_eq!(offset, 5);
                assert_eq!(expected, vec![")".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier() {
        assert!(matches!(
            Expr::parse("z+1"),
            Err(ParseError::UnknownIdent { offset: 0, .. })
        ));
    }

    #[test]
    fn unary_minus_binds_tighter_than_power() {
        let e = Expr::parse("-x^2").unwrap();
        assert_eq!(e.eval(3.0, 0.0).unwrap(), 9.0);
        assert_eq!(Expr::parse("-2^2").unwrap().eval(0.0, 0.0).unwrap(), 4.0);
        assert_eq!(Expr::parse("2^-1").unwrap().eval(0.0, 0.0).unwrap(), 0.5);
        assert!(Expr::parse("x^0.5").is_err());
    }

    #[test]
    fn literals() {
        let e = Expr::parse("1.5e2 + .25 + 3.").unwrap();
        assert_eq!(e.eval(0.0, 0.0).unwrap(), 153.25);
        assert!(Expr::parse("1e").is_err());
    }

    #[test]
    fn derivative_examples() {
        let d = Expr::parse("x^2").unwrap().diff(Var::X).simplify();
        assert_eq!(d.to_string(), "(2.0 * x)");
        let d = Expr::parse("sin(x)").unwrap().diff(Var::Y).simplify();
        assert!(d.is_zero());
    }

    #[test]
    fn evaluation_domain_errors() {
        assert_eq!(Expr::parse("x*y").unwrap().eval(2.0, 3.0).unwrap(), 6.0);
        assert!(matches!(
            Expr::parse("sqrt(x)").unwrap().eval(-1.0, 0.0),
            Err(EvalError::SqrtNegative(_))
        ));
        assert!(matches!(
            Expr::parse("1/x").unwrap().eval(0.0, 0.0),
            Err(EvalError::DivByZero)
        ));
        assert!(matches!(
            Expr::parse("x^-2").unwrap().eval(0.0, 0.0),
            Err(EvalError::DivByZero)
        ));
    }

    #[test]
    fn quarter_metric_curvature_at_origin() {
        let k = Expr::parse("81*(1-x^2)*(1-y^2)/(9+x^2*(x^2-3)^2+y^2*(y^2-3)^2)^2").unwrap();
        assert_eq!(k.eval(0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn simplify_examples() {
        assert!(Expr::parse("0*x").unwrap().simplify().is_zero());
        assert_eq!(Expr::parse("x^1").unwrap().simplify(), Expr::x());
        assert_eq!(
            Expr::parse("(1+1)*x").unwrap().simplify(),
            Expr::Mul(bx(Expr::c(2.0)), bx(Expr::x()))
        );
    }

    #[test]
    fn display_round_trips() {
        for s in ["-x^2", "-(2)*x", "x^-3 - -1.25", "atan(-y)/exp(x)", "sqrt(1e-30 + x*x)"] {
            let e = Expr::parse(s).unwrap();
            let again = Expr::parse(&e.to_string()).unwrap();
            assert_eq!(e, again, "{s}");
        }
        let programmatic = Expr::Neg(bx(Expr::c(2.0)));
        assert_eq!(Expr::parse(&programmatic.to_string()).unwrap(), programmatic);
        let negc = Expr::Mul(bx(Expr::c(-2.0)), bx(Expr::x()));
        assert_eq!(Expr::parse(&negc.to_string()).unwrap(), negc);
    }

    #[test]
    fn jet_matches_direct_differentiation() {
        let e = Expr::parse("sin(x*y) + x^3*y").unwrap();
        let j = ExprJet::new(&e, 3);
        let dxy = e.diff(Var::X).diff(Var::Y);
        let (x, y) = (0.3, -0.7);
        assert!((j.eval(1, 1, x, y).unwrap() - dxy.eval(x, y).unwrap()).abs() < 1e-14);
        let dxxy = dxy.diff(Var::X);
        assert!((j.eval(2, 1, x, y).unwrap() - dxxy.eval(x, y).unwrap()).abs() < 1e-13);
    }
}
