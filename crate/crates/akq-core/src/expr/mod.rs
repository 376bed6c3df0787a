//! Scalar expression DSL over coordinates `x1..xn`, `y1..yn`.
//!
//! Expressions are immutable trees shared through `Rc`; building blocks go
//! through smart constructors that fold constants and eliminate zero/one
//! subtrees.  No further canonicalization is attempted: differentiation is
//! exact and closed over the AST, and random-point evaluation (not tree
//! normal forms) is what all downstream identity checks rely on.

mod jet;
mod parse;

pub use jet::Jet;
pub use parse::{parse, ParseError};

use std::fmt;
use std::rc::Rc;

/// Unary functions admitted by the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
    Atan,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Atan => "atan",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "atan" => Func::Atan,
            _ => return None,
        })
    }
}

/// Expression AST.  Variables are indexed `0..n` for `x1..xn` and `n..2n`
/// for `y1..yn`; the dimension `n` travels with the model, not the tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Rc<Expr>),
    Add(Rc<Expr>, Rc<Expr>),
    Sub(Rc<Expr>, Rc<Expr>),
    Mul(Rc<Expr>, Rc<Expr>),
    Div(Rc<Expr>, Rc<Expr>),
    Pow(Rc<Expr>, Rc<Expr>),
    Call(Func, Rc<Expr>),
}

/// A base point u = (x, y) of the 2n-dimensional manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub n: usize,
    pub u: Vec<f64>,
}

impl Point {
    pub fn new(n: usize, u: Vec<f64>) -> Self {
        assert_eq!(u.len(), 2 * n, "point dimension must be 2n");
        assert!(u.iter().all(|v| v.is_finite()), "point components must be finite");
        Point { n, u }
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }
}

/// Domain failure during evaluation, carrying the offending subexpression.
#[derive(Debug, Clone, thiserror::Error, PartialEq)]
#[error("domain error in `{subexpr}`: {reason}")]
pub struct DomainError {
    pub subexpr: String,
    pub reason: String,
}

fn domain_err(e: &Expr, reason: &str) -> DomainError {
    DomainError {
        subexpr: e.render(),
        reason: reason.to_string(),
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn zero() -> Expr {
        Expr::Num(0.0)
    }

    pub fn one() -> Expr {
        Expr::Num(1.0)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 1.0)
    }

    // ---- smart constructors -------------------------------------------------

    pub fn add(a: &Expr, b: &Expr) -> Expr {
        if a.is_zero() {
            return b.clone();
        }
        if b.is_zero() {
            return a.clone();
        }
        if let (Expr::Num(x), Expr::Num(y)) = (a, b) {
            return Expr::Num(x + y);
        }
        Expr::Add(Rc::new(a.clone()), Rc::new(b.clone()))
    }

    pub fn sub(a: &Expr, b: &Expr) -> Expr {
        if b.is_zero() {
            return a.clone();
        }
        if a.is_zero() {
            return Expr::neg(b);
        }
        if let (Expr::Num(x), Expr::Num(y)) = (a, b) {
            return Expr::Num(x - y);
        }
        Expr::Sub(Rc::new(a.clone()), Rc::new(b.clone()))
    }

    pub fn neg(a: &Expr) -> Expr {
        match a {
            Expr::Num(v) => Expr::Num(-v),
            Expr::Neg(inner) => (**inner).clone(),
            _ => Expr::Neg(Rc::new(a.clone())),
        }
    }

    pub fn mul(a: &Expr, b: &Expr) -> Expr {
        if a.is_zero() || b.is_zero() {
            return Expr::zero();
        }
        if a.is_one() {
            return b.clone();
        }
        if b.is_one() {
            return a.clone();
        }
        if let (Expr::Num(x), Expr::Num(y)) = (a, b) {
            return Expr::Num(x * y);
        }
        Expr::Mul(Rc::new(a.clone()), Rc::new(b.clone()))
    }

    pub fn div(a: &Expr, b: &Expr) -> Expr {
        if a.is_zero() && !b.is_zero() {
            return Expr::zero();
        }
        if b.is_one() {
            return a.clone();
        }
        if let (Expr::Num(x), Expr::Num(y)) = (a, b) {
            if *y != 0.0 {
                return Expr::Num(x / y);
            }
        }
        Expr::Div(Rc::new(a.clone()), Rc::new(b.clone()))
    }

    pub fn pow(a: &Expr, b: &Expr) -> Expr {
        if let Expr::Num(e) = b {
            if *e == 0.0 {
                return Expr::one();
            }
            if *e == 1.0 {
                return a.clone();
            }
        }
        if a.is_one() {
            return Expr::one();
        }
        if let (Expr::Num(x), Expr::Num(y)) = (a, b) {
            let v = x.powf(*y);
            if v.is_finite() {
                return Expr::Num(v);
            }
        }
        Expr::Pow(Rc::new(a.clone()), Rc::new(b.clone()))
    }

    pub fn call(f: Func, a: &Expr) -> Expr {
        if let Expr::Num(x) = a {
            let v = match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Tan => x.tan(),
                Func::Exp => x.exp(),
                Func::Log => x.ln(),
                Func::Sqrt => x.sqrt(),
                Func::Sinh => x.sinh(),
                Func::Cosh => x.cosh(),
                Func::Atan => x.atan(),
            };
            if v.is_finite() {
                return Expr::Num(v);
            }
        }
        Expr::Call(f, Rc::new(a.clone()))
    }

    /// Rebuild the tree bottom-up through the smart constructors. Idempotent.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(a) => Expr::neg(&a.simplify()),
            Expr::Add(a, b) => Expr::add(&a.simplify(), &b.simplify()),
            Expr::Sub(a, b) => Expr::sub(&a.simplify(), &b.simplify()),
            Expr::Mul(a, b) => Expr::mul(&a.simplify(), &b.simplify()),
            Expr::Div(a, b) => Expr::div(&a.simplify(), &b.simplify()),
            Expr::Pow(a, b) => Expr::pow(&a.simplify(), &b.simplify()),
            Expr::Call(f, a) => Expr::call(*f, &a.simplify()),
        }
    }

    // ---- calculus -----------------------------------------------------------

    /// Exact symbolic partial derivative with respect to variable `var`.
    pub fn diff(&self, var: usize) -> Expr {
        match self {
            Expr::Num(_) => Expr::zero(),
            Expr::Var(i) => {
                if *i == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Neg(a) => Expr::neg(&a.diff(var)),
            Expr::Add(a, b) => Expr::add(&a.diff(var), &b.diff(var)),
            Expr::Sub(a, b) => Expr::sub(&a.diff(var), &b.diff(var)),
            Expr::Mul(a, b) => {
                let da = a.diff(var);
                let db = b.diff(var);
                Expr::add(&Expr::mul(&da, b), &Expr::mul(a, &db))
            }
            Expr::Div(a, b) => {
                // (a/b)' = a'/b - a b'/b^2
                let da = a.diff(var);
                let db = b.diff(var);
                let t1 = Expr::div(&da, b);
                let t2 = Expr::div(&Expr::mul(a, &db), &Expr::mul(b, b));
                Expr::sub(&t1, &t2)
            }
            Expr::Pow(a, b) => {
                let da = a.diff(var);
                match &**b {
                    Expr::Num(c) => {
                        // c * a^(c-1) * a'
                        let p = Expr::pow(a, &Expr::Num(c - 1.0));
                        Expr::mul(&Expr::mul(&Expr::Num(*c), &p), &da)
                    }
                    _ => {
                        // a^b * (b' log a + b a'/a)
                        let db = b.diff(var);
                        let t1 = Expr::mul(&db, &Expr::call(Func::Log, a));
                        let t2 = Expr::div(&Expr::mul(b, &da), a);
                        Expr::mul(self, &Expr::add(&t1, &t2))
                    }
                }
            }
            Expr::Call(f, a) => {
                let da = a.diff(var);
                let outer = match f {
                    Func::Sin => Expr::call(Func::Cos, a),
                    Func::Cos => Expr::neg(&Expr::call(Func::Sin, a)),
                    Func::Tan => {
                        let c = Expr::call(Func::Cos, a);
                        Expr::div(&Expr::one(), &Expr::mul(&c, &c))
                    }
                    Func::Exp => self.clone(),
                    Func::Log => Expr::div(&Expr::one(), a),
                    Func::Sqrt => Expr::div(&Expr::num(0.5), self),
                    Func::Sinh => Expr::call(Func::Cosh, a),
                    Func::Cosh => Expr::call(Func::Sinh, a),
                    Func::Atan => {
                        let sq = Expr::mul(a, a);
                        Expr::div(&Expr::one(), &Expr::add(&Expr::one(), &sq))
                    }
                };
                Expr::mul(&outer, &da)
            }
        }
    }

    /// IEEE double evaluation at `u` (length 2n slice).
    pub fn eval(&self, u: &[f64]) -> Result<f64, DomainError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => {
                if *i >= u.len() {
                    return Err(domain_err(self, "variable index out of range"));
                }
                u[*i]
            }
            Expr::Neg(a) => -a.eval(u)?,
            Expr::Add(a, b) => a.eval(u)? + b.eval(u)?,
            Expr::Sub(a, b) => a.eval(u)? - b.eval(u)?,
            Expr::Mul(a, b) => a.eval(u)? * b.eval(u)?,
            Expr::Div(a, b) => {
                let den = b.eval(u)?;
                if den == 0.0 {
                    return Err(domain_err(self, "division by zero"));
                }
                a.eval(u)? / den
            }
            Expr::Pow(a, b) => {
                let base = a.eval(u)?;
                let expo = b.eval(u)?;
                if base == 0.0 && expo < 0.0 {
                    return Err(domain_err(self, "zero base with negative exponent"));
                }
                if base < 0.0 && expo.fract() != 0.0 {
                    return Err(domain_err(self, "negative base with non-integer exponent"));
                }
                base.powf(expo)
            }
            Expr::Call(f, a) => {
                let x = a.eval(u)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => x.tan(),
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(domain_err(self, "log of non-positive value"));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(domain_err(self, "sqrt of negative value"));
                        }
                        x.sqrt()
                    }
                    Func::Sinh => x.sinh(),
                    Func::Cosh => x.cosh(),
                    Func::Atan => x.atan(),
                }
            }
        };
        if !v.is_finite() {
            return Err(domain_err(self, "non-finite result"));
        }
        Ok(v)
    }

    /// Render to parseable text; `parse(render(e))` simplifies back to `e`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        self.write(&mut s, 0);
        s
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(v) if *v < 0.0 => 3,
            _ => 5,
        }
    }

    fn write(&self, out: &mut String, parent_prec: u8) {
        let p = self.prec();
        let need = p < parent_prec;
        if need {
            out.push('(');
        }
        match self {
            Expr::Num(v) => {
                out.push_str(&format!("{}", v));
            }
            Expr::Var(_) => out.push_str(&self.var_name()),
            Expr::Neg(a) => {
                out.push('-');
                a.write(out, p + 1);
            }
            Expr::Add(a, b) => {
                a.write(out, p);
                out.push_str(" + ");
                b.write(out, p + 1);
            }
            Expr::Sub(a, b) => {
                a.write(out, p);
                out.push_str(" - ");
                b.write(out, p + 1);
            }
            Expr::Mul(a, b) => {
                a.write(out, p);
                out.push('*');
                b.write(out, p + 1);
            }
            Expr::Div(a, b) => {
                a.write(out, p);
                out.push('/');
                b.write(out, p + 1);
            }
            Expr::Pow(a, b) => {
                a.write(out, p + 1);
                out.push('^');
                b.write(out, p + 1);
            }
            Expr::Call(f, a) => {
                out.push_str(f.name());
                out.push('(');
                a.write(out, 0);
                out.push(')');
            }
        }
        if need {
            out.push(')');
        }
    }

    fn var_name(&self) -> String {
        match self {
            // Rendering needs n to segment h/v variables; it is recovered from
            // context by the caller.  To stay self-contained the tree stores the
            // flat index and renders through `render_with_n` when the split
            // matters; plain render uses `u<i>` only for out-of-band debugging.
            Expr::Var(i) => format!("u{}", i + 1),
            _ => unreachable!(),
        }
    }

    /// Render with the h/v split made explicit (`x1..xn`, `y1..yn`).
    pub fn render_n(&self, n: usize) -> String {
        let mut s = String::new();
        self.write_n(&mut s, 0, n);
        s
    }

    fn write_n(&self, out: &mut String, parent_prec: u8, n: usize) {
        let p = self.prec();
        let need = p < parent_prec;
        if need {
            out.push('(');
        }
        match self {
            Expr::Num(v) => out.push_str(&format!("{}", v)),
            Expr::Var(i) => {
                if *i < n {
                    out.push_str(&format!("x{}", i + 1));
                } else {
                    out.push_str(&format!("y{}", i - n + 1));
                }
            }
            Expr::Neg(a) => {
                out.push('-');
                a.write_n(out, p + 1, n);
            }
            Expr::Add(a, b) => {
                a.write_n(out, p, n);
                out.push_str(" + ");
                b.write_n(out, p + 1, n);
            }
            Expr::Sub(a, b) => {
                a.write_n(out, p, n);
                out.push_str(" - ");
                b.write_n(out, p + 1, n);
            }
            Expr::Mul(a, b) => {
                a.write_n(out, p, n);
                out.push('*');
                b.write_n(out, p + 1, n);
            }
            Expr::Div(a, b) => {
                a.write_n(out, p, n);
                out.push('/');
                b.write_n(out, p + 1, n);
            }
            Expr::Pow(a, b) => {
                a.write_n(out, p + 1, n);
                out.push('^');
                b.write_n(out, p + 1, n);
            }
            Expr::Call(f, a) => {
                out.push_str(f.name());
                out.push('(');
                a.write_n(out, 0, n);
                out.push(')');
            }
        }
        if need {
            out.push(')');
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render())
    }
}

macro_rules! impl_bin_op {
    ($trait:ident, $method:ident, $ctor:ident) => {
        impl std::ops::$trait for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::$ctor(self, rhs)
            }
        }
        impl std::ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$ctor(&self, &rhs)
            }
        }
    };
}

impl_bin_op!(Add, add, add);
impl_bin_op!(Sub, sub, sub);
impl_bin_op!(Mul, mul, mul);
impl_bin_op!(Div, div, div);

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}
