//! Differential forms with symbolic coefficients over the coordinate
//! cobasis du^0..du^{dim-1}.
//!
//! Components are stored once per strictly increasing index tuple; the
//! exterior derivative is symbolic.  Frame-based forms enter by expanding
//! the coframe 1-forms through their coordinate components.

use crate::expr::{DomainError, Expr};
use crate::linalg::MatE;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct Form {
    pub dim: usize,
    pub degree: usize,
    /// strictly increasing tuple -> coefficient
    pub comps: BTreeMap<Vec<u8>, Expr>,
}

/// Sort an index tuple, returning the permutation sign; `None` on repeats.
pub fn sort_signed(idx: &[u8]) -> Option<(i32, Vec<u8>)> {
    let mut v = idx.to_vec();
    let mut sign = 1;
    for i in 0..v.len() {
        for j in (i + 1..v.len()).rev() {
            if v[j - 1] > v[j] {
                v.swap(j - 1, j);
                sign = -sign;
            }
        }
    }
    for w in v.windows(2) {
        if w[0] == w[1] {
            return None;
        }
    }
    Some((sign, v))
}

impl Form {
    pub fn zero(dim: usize, degree: usize) -> Form {
        Form {
            dim,
            degree,
            comps: BTreeMap::new(),
        }
    }

    pub fn scalar(dim: usize, e: Expr) -> Form {
        let mut f = Form::zero(dim, 0);
        if !e.is_zero() {
            f.comps.insert(vec![], e);
        }
        f
    }

    /// du^axis
    pub fn coord_one_form(dim: usize, axis: usize) -> Form {
        let mut f = Form::zero(dim, 1);
        f.comps.insert(vec![axis as u8], Expr::one());
        f
    }

    /// 1-form from a row of coordinate components.
    pub fn one_form(dim: usize, comps: &[Expr]) -> Form {
        let mut f = Form::zero(dim, 1);
        for (i, c) in comps.iter().enumerate() {
            if !c.is_zero() {
                f.comps.insert(vec![i as u8], c.clone());
            }
        }
        f
    }

    /// Coframe 1-form e^alpha from a coframe matrix (row alpha).
    pub fn coframe(dim: usize, coframe: &MatE, alpha: usize) -> Form {
        Form::one_form(dim, &coframe[alpha])
    }

    pub fn insert_acc(&mut self, idx: Vec<u8>, c: Expr) {
        if c.is_zero() {
            return;
        }
        match self.comps.remove(&idx) {
            Some(old) => {
                let s = Expr::add(&old, &c);
                if !s.is_zero() {
                    self.comps.insert(idx, s);
                }
            }
            None => {
                self.comps.insert(idx, c);
            }
        }
    }

    pub fn add(&self, o: &Form) -> Form {
        assert_eq!(self.degree, o.degree);
        let mut out = self.clone();
        for (k, v) in &o.comps {
            out.insert_acc(k.clone(), v.clone());
        }
        out
    }

    pub fn sub(&self, o: &Form) -> Form {
        self.add(&o.scale(&Expr::num(-1.0)))
    }

    pub fn scale(&self, k: &Expr) -> Form {
        let mut out = Form::zero(self.dim, self.degree);
        for (idx, c) in &self.comps {
            out.insert_acc(idx.clone(), Expr::mul(k, c));
        }
        out
    }

    pub fn wedge(&self, o: &Form) -> Form {
        let mut out = Form::zero(self.dim, self.degree + o.degree);
        if out.degree > self.dim {
            return out;
        }
        for (ia, ca) in &self.comps {
            for (ib, cb) in &o.comps {
                let mut idx = ia.clone();
                idx.extend_from_slice(ib);
                if let Some((sign, sorted)) = sort_signed(&idx) {
                    let c = Expr::mul(ca, cb);
                    let c = if sign < 0 { Expr::neg(&c) } else { c };
                    out.insert_acc(sorted, c);
                }
            }
        }
        out
    }

    /// Symbolic exterior derivative.
    pub fn d(&self) -> Form {
        let mut out = Form::zero(self.dim, self.degree + 1);
        for (idx, c) in &self.comps {
            for mu in 0..self.dim {
                let dc = c.diff(mu);
                if dc.is_zero() {
                    continue;
                }
                let mut full = vec![mu as u8];
                full.extend_from_slice(idx);
                if let Some((sign, sorted)) = sort_signed(&full) {
                    let term = if sign < 0 { Expr::neg(&dc) } else { dc };
                    out.insert_acc(sorted, term);
                }
            }
        }
        out
    }

    /// Max absolute component value at a point.
    pub fn max_abs_at(&self, u: &[f64]) -> Result<f64, DomainError> {
        let mut m: f64 = 0.0;
        for c in self.comps.values() {
            m = m.max(c.eval(u)?.abs());
        }
        Ok(m)
    }

    /// Evaluate every component at a point.
    pub fn eval_at(&self, u: &[f64]) -> Result<BTreeMap<Vec<u8>, f64>, DomainError> {
        let mut out = BTreeMap::new();
        for (k, c) in &self.comps {
            let v = c.eval(u)?;
            if v != 0.0 {
                out.insert(k.clone(), v);
            }
        }
        Ok(out)
    }

    /// Antisymmetric coefficient with arbitrary index order (0 on repeats).
    pub fn coeff(&self, idx: &[u8]) -> Expr {
        match sort_signed(idx) {
            None => Expr::zero(),
            Some((sign, sorted)) => match self.comps.get(&sorted) {
                None => Expr::zero(),
                Some(c) => {
                    if sign < 0 {
                        Expr::neg(c)
                    } else {
                        c.clone()
                    }
                }
            },
        }
    }

    /// Evaluate on a list of vectors (numeric), contracting the antisymmetric
    /// component array with the vector components.
    pub fn apply_vectors(&self, u: &[f64], vecs: &[&[f64]]) -> Result<f64, DomainError> {
        assert_eq!(vecs.len(), self.degree);
        let vals = self.eval_at(u)?;
        let k = self.degree;
        let mut total = 0.0;
        // sum over sorted tuples and permutations
        for (idx, c) in vals {
            let perms = permutations(k);
            for (sign, perm) in perms {
                let mut prod = c * sign as f64;
                for (slot, &pi) in perm.iter().enumerate() {
                    prod *= vecs[slot][idx[pi] as usize];
                }
                total += prod;
            }
        }
        Ok(total)
    }
}

fn permutations(k: usize) -> Vec<(i32, Vec<usize>)> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..k).collect();
    permute(&mut items, 0, 1, &mut out);
    out
}

fn permute(items: &mut Vec<usize>, start: usize, sign: i32, out: &mut Vec<(i32, Vec<usize>)>) {
    if start == items.len() {
        out.push((sign, items.clone()));
        return;
    }
    for i in start..items.len() {
        let s = if i == start { sign } else { -sign };
        items.swap(start, i);
        permute(items, start + 1, s, out);
        items.swap(start, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn d_squared_is_zero() {
        let n = 2;
        let f = parse("exp(x1)*y1^2 + sin(x2*y2)", n).unwrap();
        let w = Form::scalar(4, f);
        let ddw = w.d().d();
        let u = [0.3, 0.8, -0.4, 1.1];
        assert!(ddw.max_abs_at(&u).unwrap() < 1e-12);
    }

    #[test]
    fn wedge_antisymmetry_of_one_forms() {
        let a = Form::coord_one_form(4, 0);
        let b = Form::coord_one_form(4, 2);
        let ab = a.wedge(&b);
        let ba = b.wedge(&a);
        let s = ab.add(&ba);
        assert!(s.comps.is_empty());
        assert!(a.wedge(&a).comps.is_empty());
    }

    #[test]
    fn apply_vectors_matches_determinant() {
        // dx0 ^ dx1 applied to e0, e1 is 1; to e1, e0 is -1
        let w = Form::coord_one_form(4, 0).wedge(&Form::coord_one_form(4, 1));
        let e0 = [1.0, 0.0, 0.0, 0.0];
        let e1 = [0.0, 1.0, 0.0, 0.0];
        let u = [0.0; 4];
        assert_eq!(w.apply_vectors(&u, &[&e0, &e1]).unwrap(), 1.0);
        assert_eq!(w.apply_vectors(&u, &[&e1, &e0]).unwrap(), -1.0);
    }
}
