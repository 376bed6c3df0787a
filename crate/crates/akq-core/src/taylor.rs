//! Truncated multivariate Taylor series at a base point.
//!
//! Coefficients are stored in the Taylor normalization (partial derivative
//! divided by t!), so products are plain convolutions.  Evaluating an
//! expression tree in this ring yields exact jets of arbitrary composite
//! fields without symbolic blow-up; transcendental nodes expand through
//! univariate Taylor composition around the inner value.

use crate::expr::{DomainError, Expr, Func, Jet};
use crate::multi_index::{self, MIdx};
use num_complex::Complex64;
use std::collections::BTreeMap;

/// Truncated Taylor series in `dim` variables, all terms of total degree
/// <= `cap` retained.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub dim: usize,
    pub cap: usize,
    /// multi-index -> Taylor coefficient (d^t f / t!)
    pub c: BTreeMap<MIdx, Complex64>,
}

impl Series {
    pub fn zero(dim: usize, cap: usize) -> Series {
        Series {
            dim,
            cap,
            c: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, cap: usize, v: Complex64) -> Series {
        let mut s = Series::zero(dim, cap);
        if v != Complex64::new(0.0, 0.0) {
            s.c.insert(vec![0u8; dim], v);
        }
        s
    }

    pub fn constant_re(dim: usize, cap: usize, v: f64) -> Series {
        Series::constant(dim, cap, Complex64::new(v, 0.0))
    }

    /// The series of the displacement (u^axis - u0^axis).
    pub fn variable(dim: usize, cap: usize, axis: usize) -> Series {
        let mut s = Series::zero(dim, cap);
        if cap >= 1 {
            s.c.insert(multi_index::unit(dim, axis), Complex64::new(1.0, 0.0));
        }
        s
    }

    pub fn value(&self) -> Complex64 {
        self.c
            .get(&vec![0u8; self.dim])
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    fn insert_acc(&mut self, t: MIdx, v: Complex64) {
        if v == Complex64::new(0.0, 0.0) {
            return;
        }
        let slot = self.c.entry(t).or_insert(Complex64::new(0.0, 0.0));
        *slot += v;
        if *slot == Complex64::new(0.0, 0.0) {
            // keep the map sparse
        }
    }

    pub fn add(&self, o: &Series) -> Series {
        debug_assert_eq!(self.dim, o.dim);
        let cap = self.cap.min(o.cap);
        let mut out = Series::zero(self.dim, cap);
        for (t, v) in self.c.iter().chain(o.c.iter()) {
            if multi_index::degree(t) <= cap {
                out.insert_acc(t.clone(), *v);
            }
        }
        out
    }

    pub fn sub(&self, o: &Series) -> Series {
        self.add(&o.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, k: Complex64) -> Series {
        let mut out = Series::zero(self.dim, self.cap);
        if k == Complex64::new(0.0, 0.0) {
            return out;
        }
        for (t, v) in &self.c {
            out.c.insert(t.clone(), v * k);
        }
        out
    }

    pub fn mul(&self, o: &Series) -> Series {
        debug_assert_eq!(self.dim, o.dim);
        let cap = self.cap.min(o.cap);
        let mut out = Series::zero(self.dim, cap);
        for (ta, va) in &self.c {
            let da = multi_index::degree(ta);
            if da > cap {
                continue;
            }
            for (tb, vb) in &o.c {
                if da + multi_index::degree(tb) > cap {
                    continue;
                }
                out.insert_acc(multi_index::add(ta, tb), va * vb);
            }
        }
        out.prune();
        out
    }

    fn prune(&mut self) {
        self.c.retain(|_, v| *v != Complex64::new(0.0, 0.0));
    }

    /// Multiplicative inverse; requires a nonzero constant term.
    pub fn recip(&self) -> Result<Series, DomainError> {
        let f0 = self.value();
        if f0 == Complex64::new(0.0, 0.0) {
            return Err(DomainError {
                subexpr: "series".into(),
                reason: "reciprocal of series with zero constant term".into(),
            });
        }
        let mut g = Series::zero(self.dim, self.cap);
        g.c.insert(vec![0u8; self.dim], Complex64::new(1.0, 0.0) / f0);
        // graded solve: (f g)_t = delta_{t,0}
        for t in multi_index::up_to(self.dim, self.cap).into_iter().skip(1) {
            let mut acc = Complex64::new(0.0, 0.0);
            for (s, fv) in &self.c {
                if s.iter().all(|&e| e == 0) {
                    continue;
                }
                if let Some(rest) = multi_index::sub(&t, s) {
                    if let Some(gv) = g.c.get(&rest) {
                        acc += fv * gv;
                    }
                }
            }
            if acc != Complex64::new(0.0, 0.0) {
                g.c.insert(t, -acc / f0);
            }
        }
        Ok(g)
    }

    pub fn div(&self, o: &Series) -> Result<Series, DomainError> {
        Ok(self.mul(&o.recip()?))
    }

    /// Partial derivative along `axis` (exact on retained coefficients; the
    /// top retained degree of the result drops by one).
    pub fn diff(&self, axis: usize) -> Series {
        let cap = self.cap.saturating_sub(1);
        let mut out = Series::zero(self.dim, cap);
        for (t, v) in &self.c {
            if t[axis] == 0 {
                continue;
            }
            let mut s = t.clone();
            s[axis] -= 1;
            if multi_index::degree(&s) <= cap {
                out.insert_acc(s, v * t[axis] as f64);
            }
        }
        out
    }

    /// Compose a univariate Taylor expansion `coeffs[k] (h)^k` with the
    /// zero-constant part `h` of this series (self = const + h is split by
    /// the caller).
    fn compose_univariate(h: &Series, coeffs: &[f64]) -> Series {
        let mut out = Series::constant_re(h.dim, h.cap, coeffs[0]);
        let mut pw = Series::constant_re(h.dim, h.cap, 1.0);
        for &ck in coeffs.iter().skip(1) {
            pw = pw.mul(h);
            if pw.c.is_empty() {
                break;
            }
            out = out.add(&pw.scale(Complex64::new(ck, 0.0)));
        }
        out
    }

    fn split_const(&self) -> (f64, Series, Result<(), DomainError>) {
        let v = self.value();
        let mut h = self.clone();
        h.c.remove(&vec![0u8; self.dim]);
        let ok = if v.im != 0.0 {
            Err(DomainError {
                subexpr: "series".into(),
                reason: "transcendental of a complex-valued series".into(),
            })
        } else {
            Ok(())
        };
        (v.re, h, ok)
    }

    /// Apply a unary function through univariate Taylor composition.
    pub fn apply(&self, f: Func) -> Result<Series, DomainError> {
        let (a, h, ok) = self.split_const();
        ok?;
        let k = self.cap;
        let err = |reason: &str| DomainError {
            subexpr: format!("{}(series)", f.name()),
            reason: reason.into(),
        };
        let coeffs: Vec<f64> = match f {
            Func::Exp => {
                let ea = a.exp();
                let mut c = vec![ea];
                for j in 1..=k {
                    c.push(c[j - 1] / j as f64);
                }
                c
            }
            Func::Log => {
                if a <= 0.0 {
                    return Err(err("log of non-positive value"));
                }
                // log(a+u) = log a + sum (-1)^{j+1} u^j / (j a^j)
                let mut c = vec![a.ln()];
                for j in 1..=k {
                    let sgn = if j % 2 == 0 { -1.0 } else { 1.0 };
                    c.push(sgn / (j as f64 * a.powi(j as i32)));
                }
                c
            }
            Func::Sqrt => {
                if a < 0.0 {
                    return Err(err("sqrt of negative value"));
                }
                if a == 0.0 {
                    return Err(err("sqrt is not smooth at zero"));
                }
                binom_coeffs(0.5, a, k)
            }
            Func::Sin => {
                let (s, c0) = (a.sin(), a.cos());
                let mut c = Vec::with_capacity(k + 1);
                let mut fact = 1.0;
                for j in 0..=k {
                    if j > 0 {
                        fact *= j as f64;
                    }
                    // d^j sin at a cycles sin, cos, -sin, -cos
                    let d = match j % 4 {
                        0 => s,
                        1 => c0,
                        2 => -s,
                        _ => -c0,
                    };
                    c.push(d / fact);
                }
                c
            }
            Func::Cos => {
                let (s, c0) = (a.sin(), a.cos());
                let mut c = Vec::with_capacity(k + 1);
                let mut fact = 1.0;
                for j in 0..=k {
                    if j > 0 {
                        fact *= j as f64;
                    }
                    let d = match j % 4 {
                        0 => c0,
                        1 => -s,
                        2 => -c0,
                        _ => s,
                    };
                    c.push(d / fact);
                }
                c
            }
            Func::Sinh => {
                let (s, c0) = (a.sinh(), a.cosh());
                let mut c = Vec::with_capacity(k + 1);
                let mut fact = 1.0;
                for j in 0..=k {
                    if j > 0 {
                        fact *= j as f64;
                    }
                    c.push(if j % 2 == 0 { s } else { c0 } / fact);
                }
                c
            }
            Func::Cosh => {
                let (s, c0) = (a.sinh(), a.cosh());
                let mut c = Vec::with_capacity(k + 1);
                let mut fact = 1.0;
                for j in 0..=k {
                    if j > 0 {
                        fact *= j as f64;
                    }
                    c.push(if j % 2 == 0 { c0 } else { s } / fact);
                }
                c
            }
            Func::Tan => {
                // tan = sin/cos through the series ring itself
                let s = self.apply(Func::Sin)?;
                let c = self.apply(Func::Cos)?;
                return s.div(&c);
            }
            Func::Atan => {
                // univariate Taylor of atan at a: integrate 1/(1+(a+u)^2)
                // g(u) = 1/(1+a^2+2au+u^2) expanded as a univariate series.
                let mut den = vec![0.0; k + 1];
                den[0] = 1.0 + a * a;
                if k >= 1 {
                    den[1] = 2.0 * a;
                }
                if k >= 2 {
                    den[2] = 1.0;
                }
                let mut g = vec![0.0; k + 1];
                g[0] = 1.0 / den[0];
                for j in 1..=k {
                    let mut acc = 0.0;
                    for m in 1..=j.min(2) {
                        acc += den[m] * g[j - m];
                    }
                    g[j] = -acc / den[0];
                }
                let mut c = vec![a.atan()];
                for j in 1..=k {
                    c.push(g[j - 1] / j as f64);
                }
                c
            }
        };
        Ok(Series::compose_univariate(&h, &coeffs))
    }

    /// Real power with arbitrary exponent via the binomial series.
    pub fn powf(&self, e: f64) -> Result<Series, DomainError> {
        if e == 0.0 {
            return Ok(Series::constant_re(self.dim, self.cap, 1.0));
        }
        if e.fract() == 0.0 && e.abs() <= 32.0 {
            return self.powi(e as i64);
        }
        let (a, h, ok) = self.split_const();
        ok?;
        if a <= 0.0 {
            return Err(DomainError {
                subexpr: "series^e".into(),
                reason: "non-integer power of non-positive leading value".into(),
            });
        }
        Ok(Series::compose_univariate(&h, &binom_coeffs(e, a, self.cap)))
    }

    pub fn powi(&self, e: i64) -> Result<Series, DomainError> {
        if e < 0 {
            return self.recip()?.powi(-e);
        }
        let mut out = Series::constant_re(self.dim, self.cap, 1.0);
        for _ in 0..e {
            out = out.mul(self);
        }
        Ok(out)
    }

    /// Derivative value d^t f (Taylor coefficient times t!).
    pub fn deriv_value(&self, t: &[u8]) -> Complex64 {
        self.c
            .get(&t.to_vec())
            .map(|v| v * multi_index::factorial(t))
            .unwrap_or(Complex64::new(0.0, 0.0))
    }
}

/// Taylor coefficients of (a+u)^e around u=0, a > 0: C(e,k) a^{e-k}.
fn binom_coeffs(e: f64, a: f64, k: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(k + 1);
    let mut binom = 1.0;
    for j in 0..=k {
        if j > 0 {
            binom *= (e - (j as f64 - 1.0)) / j as f64;
        }
        c.push(binom * a.powf(e - j as f64));
    }
    c
}

/// Evaluate an expression into the Taylor ring at `base` (length dim), with
/// all coefficients of total degree <= `cap` exact.
pub fn eval_series(e: &Expr, base: &[f64], cap: usize) -> Result<Series, DomainError> {
    let dim = base.len();
    match e {
        Expr::Num(v) => Ok(Series::constant_re(dim, cap, *v)),
        Expr::Var(i) => {
            let mut s = Series::variable(dim, cap, *i);
            s.insert_acc(vec![0u8; dim], Complex64::new(base[*i], 0.0));
            Ok(s)
        }
        Expr::Neg(a) => Ok(eval_series(a, base, cap)?.scale(Complex64::new(-1.0, 0.0))),
        Expr::Add(a, b) => Ok(eval_series(a, base, cap)?.add(&eval_series(b, base, cap)?)),
        Expr::Sub(a, b) => Ok(eval_series(a, base, cap)?.sub(&eval_series(b, base, cap)?)),
        Expr::Mul(a, b) => Ok(eval_series(a, base, cap)?.mul(&eval_series(b, base, cap)?)),
        Expr::Div(a, b) => eval_series(a, base, cap)?.div(&eval_series(b, base, cap)?),
        Expr::Pow(a, b) => {
            let sa = eval_series(a, base, cap)?;
            match &**b {
                Expr::Num(c) => sa.powf(*c),
                _ => {
                    // general exponent: a^b = exp(b log a)
                    let sb = eval_series(b, base, cap)?;
                    sb.mul(&sa.apply(Func::Log)?).apply(Func::Exp)
                }
            }
        }
        Expr::Call(f, a) => eval_series(a, base, cap)?.apply(*f),
    }
}

/// Cross-check helper: the jet of `e` recovered from the Taylor route.
pub fn jet_via_series(e: &Expr, base: &[f64], order: usize) -> Result<Jet, DomainError> {
    let s = eval_series(e, base, order)?;
    let mut vals = BTreeMap::new();
    for t in multi_index::up_to(base.len(), order) {
        vals.insert(t.clone(), s.deriv_value(&t).re);
    }
    Ok(Jet {
        base: base.to_vec(),
        order,
        vals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn check_against_symbolic(src: &str, u: [f64; 4], order: usize, tol: f64) {
        let e = parse(src, 2).unwrap();
        let sym = Jet::of(&e, &u, order).unwrap();
        let tay = jet_via_series(&e, &u, order).unwrap();
        for (t, v) in &sym.vals {
            let w = tay.vals[t];
            let scale = v.abs().max(1.0);
            assert!(
                (v - w).abs() <= tol * scale,
                "{src}: mismatch at {t:?}: symbolic {v} vs taylor {w}"
            );
        }
    }

    #[test]
    fn taylor_matches_symbolic_jets() {
        let u = [0.4, -0.3, 1.2, 0.8];
        check_against_symbolic("exp(2*x1)*(y1^2 + y2^2)", u, 4, 1e-12);
        check_against_symbolic("(y1^4 + y2^4)^0.25", u, 4, 1e-11);
        check_against_symbolic("sin(x1*y2) + cos(x2)^2", u, 4, 1e-12);
        check_against_symbolic("1/(1 + x1^2 + y1^2)", u, 4, 1e-12);
        check_against_symbolic("atan(x1 + y2) + sinh(x2)*cosh(y1)", u, 3, 1e-12);
        check_against_symbolic("tan(x1/2) + log(1 + y1^2)", u, 3, 1e-12);
    }

    #[test]
    fn recip_is_exact() {
        let e = parse("1 + x1 + y1^2", 2).unwrap();
        let u = [0.2, 0.0, 0.5, 0.0];
        let s = eval_series(&e, &u, 5).unwrap();
        let r = s.recip().unwrap();
        let prod = s.mul(&r);
        for (t, v) in &prod.c {
            let want = if t.iter().all(|&x| x == 0) { 1.0 } else { 0.0 };
            assert!((v.re - want).abs() < 1e-14 && v.im.abs() < 1e-16, "{t:?} -> {v}");
        }
    }
}
